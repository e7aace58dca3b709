"""The planning loops: action proposal, bounded tree search, and plan generation.

Works over any backend satisfying the six-role contract. Traces every module
call, caches proposed actions and predicted states per (state, goal), and
keeps all tie-breaking on an injected RNG so runs are reproducible.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Sequence

from .core import (
    BackendError,
    Configuration,
    EmptyProposal,
    Feedback,
    Goal,
    IllegalMove,
    InvariantError,
    LIST_LABELS,
    ModuleBackend,
    MoveAction,
    Plan,
    SearchConfig,
    TaskKind,
    Value,
)

MAX_PROPOSAL_ROUNDS = 10


@dataclass
class TraceEvent:
    """One module call: what went in, what came out, and how it was read."""

    step: int
    module: str
    input_text: str
    output_text: str
    parsed: Any = None
    verdict: bool | None = None
    value: float | None = None
    temperature: float | None = None

    def to_json_dict(self) -> dict:
        doc: dict[str, Any] = {
            "step": self.step,
            "module": self.module,
            "input_text": self.input_text,
            "output_text": self.output_text,
            "parsed": self.parsed,
        }
        if self.verdict is not None:
            doc["verdict"] = self.verdict
        if self.value is not None:
            doc["value"] = self.value
        if self.temperature is not None:
            doc["temperature"] = self.temperature
        return doc


class Trace:
    """Collects module events and proposal counters for one plan generation."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.total_proposals = 0
        self.invalid_proposals = 0
        self.step = 0

    def emit(self, module: str, input_text: str, output_text: str, **extra: Any) -> None:
        self.events.append(TraceEvent(self.step, module, input_text, output_text, **extra))


@dataclass
class RunRecord:
    """Everything observed while planning one problem, plus replay-based scores.

    The solved/invalid fields are filled by the harness after replaying the
    plan on the ground-truth simulator; module self-reports never decide them.
    """

    problem_id: str
    events: list[TraceEvent]
    plan: Plan
    total_proposals: int
    invalid_proposals: int
    budget_exhausted: bool
    goal_confirmed: bool
    error: str | None = None
    run_index: int = 0
    solved_strict: bool | None = None
    solved_any: bool | None = None
    invalid_in_plan: int | None = None
    plan_length: int | None = None
    optimal_steps: int | None = None

    def final_json_dict(self, **meta: Any) -> dict:
        doc = dict(meta)
        doc.update(
            {
                "final": True,
                "problem_id": self.problem_id,
                "run_index": self.run_index,
                "plan": self.plan.texts(),
                "total_proposals": self.total_proposals,
                "invalid_proposals": self.invalid_proposals,
                "budget_exhausted": self.budget_exhausted,
                "goal_confirmed": self.goal_confirmed,
                "error": self.error,
                "solved_strict": self.solved_strict,
                "solved_any": self.solved_any,
                "invalid_in_plan": self.invalid_in_plan,
                "plan_length": self.plan_length,
                "optimal_steps": self.optimal_steps,
            }
        )
        return doc

    def to_jsonl(self, **meta: Any) -> str:
        lines = [json.dumps(event.to_json_dict(), sort_keys=True) for event in self.events]
        lines.append(json.dumps(self.final_json_dict(**meta), sort_keys=True))
        return "\n".join(lines) + "\n"


class SearchCache:
    """Per-problem memo of proposed actions and predicted states, keyed by text."""

    def __init__(self) -> None:
        self._entries: dict[tuple[str, str], tuple[tuple[MoveAction, ...], tuple[Configuration, ...]]] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key: tuple[str, str]) -> tuple[tuple[MoveAction, ...], tuple[Configuration, ...]] | None:
        entry = self._entries.get(key)
        if entry is None:
            self.misses += 1
        else:
            self.hits += 1
        return entry

    def put(
        self,
        key: tuple[str, str],
        actions: Sequence[MoveAction],
        next_states: Sequence[Configuration],
    ) -> None:
        if len(actions) != len(next_states):
            raise InvariantError("cached actions and predicted states must align")
        self._entries[key] = (tuple(actions), tuple(next_states))


def next_state_from_action(state: Configuration, action: MoveAction) -> Configuration:
    """Read the successor straight off the action, without a predictor call.

    Graph actions name the next room outright. For list moves the move is
    applied structurally; if it cannot be (the number is not at its list's
    end, or the result breaks an invariant) the state is left unchanged.
    """
    if action.task_kind is TaskKind.GRAPH:
        return Configuration.from_room(action.target_room)
    lists = [list(lst) for lst in state.toh_lists]
    source = lists[LIST_LABELS.index(action.source)]
    if not source or source[-1] != action.number:
        return state
    try:
        source.pop()
        lists[LIST_LABELS.index(action.target)].append(action.number)
        return Configuration.from_lists(*lists)
    except InvariantError:
        return state


def propose_actions(
    state: Configuration,
    goal: Goal,
    branches: int,
    backend: ModuleBackend,
    trace: Trace,
    use_monitor: bool = True,
    max_rounds: int = MAX_PROPOSAL_ROUNDS,
) -> list[MoveAction]:
    """The actor/monitor loop: gather distinct approved actions, feeding back rejections.

    Iterates until the buffer holds enough distinct approved actions (two, or
    the requested branch count if larger) or the round limit is hit. Falls
    back to the buffer contents, then to the last raw proposals.
    """
    wanted = max(2, branches)
    buffer: list[MoveAction] = []
    seen: set[str] = set()
    feedback: list[Feedback] = []
    feedback_keys: set[tuple[str, str]] = set()
    last_raw: list[MoveAction] = []
    for _ in range(max_rounds):
        actions = backend.propose(state, goal, tuple(feedback), branches)
        trace.emit(
            "actor",
            input_text=f"state: {state.text()!r} goal: {goal.text()!r} feedback: {len(feedback)}",
            output_text="; ".join(a.text() for a in actions),
            parsed=[a.text() for a in actions],
            temperature=getattr(backend, "base_temperature", None),
        )
        trace.total_proposals += len(actions)
        if not actions:
            continue
        last_raw = list(actions)
        if not use_monitor:
            return last_raw
        verdicts = backend.assess(state, actions)
        for action, verdict in zip(actions, verdicts):
            trace.emit(
                "monitor",
                input_text=action.text(),
                output_text=verdict.feedback.text if verdict.feedback else "valid",
                verdict=verdict.valid,
            )
            if verdict.valid:
                if action.text() not in seen:
                    seen.add(action.text())
                    buffer.append(action)
            else:
                trace.invalid_proposals += 1
                key = (verdict.feedback.action.text(), verdict.feedback.text)
                if key not in feedback_keys:
                    feedback_keys.add(key)
                    feedback.append(verdict.feedback)
        if len(buffer) >= wanted:
            break
    if buffer:
        return buffer
    if last_raw:
        return last_raw
    raise EmptyProposal(f"the actor produced no action in {max_rounds} rounds")


def _checked(backend: ModuleBackend, state: Configuration, goal: Goal, trace: Trace) -> bool:
    achieved = backend.check(state, goal)
    trace.emit(
        "coordinator",
        input_text=f"state: {state.text()!r} goal: {goal.text()!r}",
        output_text="yes" if achieved else "no",
        verdict=achieved,
    )
    return achieved


def _predicted(
    backend: ModuleBackend,
    state: Configuration,
    action: MoveAction,
    cfg: SearchConfig,
    trace: Trace,
) -> Configuration:
    if not cfg.use_predictor:
        return next_state_from_action(state, action)
    try:
        nxt = backend.predict(state, action)
    except IllegalMove as exc:
        # An illegal action cannot be executed, so the state stays put; the
        # ground-truth replay will still flag the action itself.
        trace.emit("predictor", input_text=action.text(), output_text=f"illegal: {exc}", parsed=state.text())
        return state
    trace.emit("predictor", input_text=action.text(), output_text=nxt.text(), parsed=nxt.text())
    return nxt


def search(
    level: int,
    state: Configuration,
    goal: Goal,
    cfg: SearchConfig,
    backend: ModuleBackend,
    cache: SearchCache | None,
    rng: random.Random,
    trace: Trace,
) -> tuple[MoveAction, Configuration, Value]:
    """Bounded lookahead: expand proposed branches, value the leaves, pick the argmax.

    A branch whose predicted state satisfies the goal terminates the search
    call outright: it is not expanded, takes value 0 (the maximum, since
    values are negated step counts), and is returned without tie-breaking
    against branches that merely reach the goal deeper in the tree. Deeper
    values propagate unchanged; ties break uniformly on the RNG.

    Expansions are cached only when the monitor vetted them: an unexamined
    stochastic actor can propose only illegal moves for a state, and replaying
    that frozen expansion every time the state recurs would loop the plan
    without progress until the budget runs out.
    """
    if not cfg.use_monitor:
        cache = None
    key = (state.text(), goal.text())
    cached = cache.get(key) if cache is not None else None
    if cached is not None:
        actions, next_states = cached
    else:
        actions = tuple(
            propose_actions(state, goal, cfg.branches, backend, trace, use_monitor=cfg.use_monitor)
        )
        next_states = tuple(_predicted(backend, state, action, cfg, trace) for action in actions)
        if cache is not None:
            cache.put(key, actions, next_states)
    values: list[float] = []
    for action, nxt in zip(actions, next_states):
        if _checked(backend, nxt, goal, trace):
            return action, nxt, Value(0.0)
        if level < cfg.depth:
            _, _, child = search(level + 1, nxt, goal, cfg, backend, cache, rng, trace)
            values.append(child.value)
        else:
            leaf = backend.evaluate(nxt, goal)
            trace.emit(
                "evaluator",
                input_text=f"state: {nxt.text()!r} goal: {goal.text()!r}",
                output_text=str(leaf.value),
                value=leaf.value,
            )
            values.append(leaf.value)
    best = max(values)
    candidates = [i for i, v in enumerate(values) if v == best]
    pick = candidates[0] if len(candidates) == 1 else rng.choice(candidates)
    return actions[pick], next_states[pick], Value(best)


def generate_plan(
    state: Configuration,
    goal: Goal,
    cfg: SearchConfig,
    backend: ModuleBackend,
    problem_id: str = "",
    cache: SearchCache | None = None,
    use_cache: bool = True,
    rng: random.Random | None = None,
    trace: Trace | None = None,
) -> tuple[Plan, RunRecord]:
    """Generate a plan of at most `cfg.budget` actions, subgoal by subgoal.

    Backend failures do not raise: the record carries the error annotation
    and whatever partial plan was built, so the problem scores as unsolved.
    """
    trace = trace if trace is not None else Trace()
    rng = rng if rng is not None else random.Random(cfg.rng_seed)
    if cache is None and use_cache:
        cache = SearchCache()
    plan_actions: list[MoveAction] = []
    goal_confirmed = False
    error = None
    try:
        if _checked(backend, state, goal, trace):
            goal_confirmed = True
        else:
            subgoals: list[Goal] = []
            if cfg.use_decomposer:
                subgoals = list(backend.decompose(state, goal))
                trace.emit(
                    "decomposer",
                    input_text=f"state: {state.text()!r} goal: {goal.text()!r}",
                    output_text="; ".join(sub.text() for sub in subgoals),
                    parsed=[sub.text() for sub in subgoals],
                )
            achieved = False
            for active in [*subgoals, goal]:
                trace.step = len(plan_actions)
                achieved = _checked(backend, state, active, trace)
                while not achieved and len(plan_actions) < cfg.budget:
                    trace.step = len(plan_actions)
                    if cfg.use_search:
                        action, nxt, _ = search(1, state, active, cfg, backend, cache, rng, trace)
                    else:
                        proposals = propose_actions(
                            state, active, cfg.branches, backend, trace, use_monitor=cfg.use_monitor
                        )
                        action = proposals[0]
                        nxt = _predicted(backend, state, action, cfg, trace)
                    plan_actions.append(action)
                    state = nxt
                    achieved = _checked(backend, state, active, trace)
            goal_confirmed = achieved
    except (BackendError, EmptyProposal) as exc:
        error = f"{type(exc).__name__}: {exc}"
    plan = Plan(tuple(plan_actions))
    record = RunRecord(
        problem_id=problem_id,
        events=trace.events,
        plan=plan,
        total_proposals=trace.total_proposals,
        invalid_proposals=trace.invalid_proposals,
        budget_exhausted=error is None and not goal_confirmed and len(plan_actions) >= cfg.budget,
        goal_confirmed=goal_confirmed,
        error=error,
    )
    return plan, record
