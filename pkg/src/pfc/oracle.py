"""Rule-exact implementations of all six module roles, with seeded fault injection.

The oracle is the test harness's ground truth and the desk-scale stand-in
for a hosted model: with an all-zero noise profile every role agrees exactly
with the task rules, and each noise knob corrupts exactly one role so
degradation studies stay attributable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from . import rooms, toh
from .core import (
    Configuration,
    Feedback,
    Goal,
    GoalKind,
    IllegalMove,
    InvariantError,
    MoveAction,
    TaskKind,
    Value,
    Verdict,
)


@dataclass(frozen=True)
class NoiseProfile:
    """Seeded corruption knobs: actor injections, evaluator bias, monitor leniency."""

    invalid_action_rate: float = 0.0
    evaluator_error_bias: int = 0
    monitor_false_accept_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("invalid_action_rate", "monitor_false_accept_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvariantError(f"{name} must be a probability, got {p}")

    @property
    def is_silent(self) -> bool:
        return (
            self.invalid_action_rate == 0.0
            and self.evaluator_error_bias == 0
            and self.monitor_false_accept_rate == 0.0
        )

    def with_seed(self, seed: int) -> "NoiseProfile":
        return replace(self, seed=seed)


class OracleBackend:
    """Deterministic six-role backend driven by the ground-truth task rules."""

    base_temperature = 0.0

    def __init__(self, graph: rooms.RoomGraph | None = None, noise: NoiseProfile | None = None):
        self.graph = graph
        self.noise = noise or NoiseProfile()
        self._rng = random.Random(f"oracle:{self.noise.seed}")

    # -- role contract -------------------------------------------------

    def decompose(self, state: Configuration, goal: Goal) -> list[Goal]:
        if state.task_kind is not TaskKind.TOH:
            return []
        if goal.kind is not GoalKind.TARGET_CONFIGURATION:
            raise InvariantError("ToH goals are target configurations")
        if state == goal.target_configuration:
            return []
        subgoal = toh.goal_recursion_subgoal(state, goal.target_configuration)
        return [Goal.for_configuration(subgoal)]

    def propose(
        self, state: Configuration, goal: Goal, feedback: Sequence[Feedback], branches: int
    ) -> list[MoveAction]:
        if branches < 1:
            raise InvariantError(f"branches must be >= 1, got {branches}")
        ranked = sorted(
            self._legal_actions(state),
            key=lambda a: (self._distance(self._next_state(state, a), goal), a.text()),
        )
        proposals = ranked[:branches]
        if self.noise.invalid_action_rate > 0.0:
            named = {fb.action.text() for fb in feedback}
            pool = [a for a in self._illegal_actions(state) if a.text() not in named]
            proposals = [
                self._rng.choice(pool)
                if pool and self._rng.random() < self.noise.invalid_action_rate
                else action
                for action in proposals
            ]
        return proposals

    def assess(self, state: Configuration, actions: Sequence[MoveAction]) -> list[Verdict]:
        verdicts = []
        for action in actions:
            verdict = self._assess_one(state, action)
            if (
                not verdict.valid
                and self.noise.monitor_false_accept_rate > 0.0
                and self._rng.random() < self.noise.monitor_false_accept_rate
            ):
                verdict = Verdict(valid=True)
            verdicts.append(verdict)
        return verdicts

    def predict(self, state: Configuration, action: MoveAction) -> Configuration:
        if state.task_kind is TaskKind.TOH:
            return toh.apply_move(state, action)
        return Configuration.from_room(action.target_room)

    def evaluate(self, state: Configuration, goal: Goal) -> Value:
        estimate = max(0, self._distance(state, goal) + self.noise.evaluator_error_bias)
        return Value(-float(estimate))

    def check(self, state: Configuration, goal: Goal) -> bool:
        if goal.kind is GoalKind.TARGET_CONFIGURATION:
            return state == goal.target_configuration
        if goal.kind is GoalKind.TARGET_ROOM:
            return state.graph_room == goal.target_room
        return state.graph_room == goal.best_reward_room

    def full_solution(self, state: Configuration, goal: Goal, mode: str = "zero_shot") -> list[MoveAction]:
        """A best-case one-shot solver: the full optimal action sequence."""
        actions = []
        while not self.check(state, goal):
            best = min(
                self._legal_actions(state),
                key=lambda a: (self._distance(self._next_state(state, a), goal), a.text()),
            )
            actions.append(best)
            state = self._next_state(state, best)
        return actions

    # -- internals -----------------------------------------------------

    def _require_graph(self) -> rooms.RoomGraph:
        if self.graph is None:
            raise InvariantError("this oracle was built without a room graph")
        return self.graph

    def _goal_room(self, goal: Goal) -> int:
        return goal.target_room if goal.kind is GoalKind.TARGET_ROOM else goal.best_reward_room

    def _distance(self, state: Configuration, goal: Goal) -> int:
        if state.task_kind is TaskKind.TOH:
            return toh.bfs_optimal(state, goal.target_configuration)
        return rooms.bfs_distance(self._require_graph(), state.graph_room, self._goal_room(goal))

    def _legal_actions(self, state: Configuration) -> list[MoveAction]:
        if state.task_kind is TaskKind.TOH:
            return toh.legal_moves(state)
        neighbors = self._require_graph().neighbors(state.graph_room)
        return [MoveAction.go_to(room) for room in sorted(neighbors)]

    def _illegal_actions(self, state: Configuration) -> list[MoveAction]:
        if state.task_kind is TaskKind.TOH:
            return [a for a in toh.all_moves(state.n_disks) if not toh.is_legal_move(state, a).valid]
        graph = self._require_graph()
        reachable = graph.neighbors(state.graph_room)
        return [MoveAction.go_to(room) for room in graph.nodes if room not in reachable]

    def _next_state(self, state: Configuration, action: MoveAction) -> Configuration:
        if state.task_kind is TaskKind.TOH:
            return toh.apply_move(state, action)
        return Configuration.from_room(action.target_room)

    def _assess_one(self, state: Configuration, action: MoveAction) -> Verdict:
        if state.task_kind is TaskKind.TOH:
            return toh.is_legal_move(state, action)
        graph = self._require_graph()
        if action.target_room not in graph.nodes:
            return Verdict(
                valid=False,
                feedback=Feedback(
                    text=f"There is no room {action.target_room}, so the move is invalid.",
                    action=action,
                ),
            )
        if action.target_room in graph.neighbors(state.graph_room):
            return Verdict(valid=True)
        return Verdict(
            valid=False,
            feedback=Feedback(
                text=(
                    f"room {action.target_room} is not connected to room {state.graph_room}, "
                    "so the move is invalid."
                ),
                action=action,
            ),
        )
