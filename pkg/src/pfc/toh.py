"""Ground-truth Tower of Hanoi in the three-list formulation.

Rules, transitions, problem enumeration, a BFS optimality oracle, and the
goal-recursion subgoal used by the decomposer role. All functions are pure
over immutable configurations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

from .core import (
    LIST_LABELS,
    Configuration,
    Feedback,
    IllegalMove,
    InvariantError,
    MoveAction,
    TaskKind,
    Verdict,
)


@dataclass(frozen=True)
class TohProblem:
    problem_id: str
    n_disks: int
    initial: Configuration
    goal: Configuration


def _require_toh(configuration: Configuration) -> None:
    if configuration.task_kind is not TaskKind.TOH:
        raise InvariantError("expected a ToH configuration")


def is_legal_move(configuration: Configuration, action: MoveAction) -> Verdict:
    """Judge one move against the two rules; illegal moves get rule-naming feedback."""
    _require_toh(configuration)
    if action.task_kind is not TaskKind.TOH:
        raise InvariantError("expected a ToH move")
    source = configuration.toh_lists[LIST_LABELS.index(action.source)]
    target = configuration.toh_lists[LIST_LABELS.index(action.target)]
    sentences = []
    rule1_ok = bool(source) and source[-1] == action.number
    if not rule1_ok:
        sentences.append(
            f"{action.number} is not at the rightmost end of list {action.source}, "
            "so the move violates Rule #1."
        )
    rule2_ok = not target or all(action.number > x for x in target)
    if not rule2_ok:
        sentences.append(
            f"Maximum of list {action.target} is {max(target)}. "
            f"{action.number} is not larger than {max(target)}. "
            "Hence the move violates Rule #2."
        )
    if rule1_ok and rule2_ok:
        return Verdict(valid=True)
    violated = "both Rule #1 and Rule #2" if len(sentences) == 2 else ("Rule #1" if not rule1_ok else "Rule #2")
    sentences.append(
        f"Since the Move {action.number} from list {action.source} to list {action.target} "
        f"violates {violated}, it is invalid."
    )
    return Verdict(valid=False, feedback=Feedback(text=" ".join(sentences), action=action))


def apply_move(configuration: Configuration, action: MoveAction) -> Configuration:
    """Apply a legal move; raises IllegalMove otherwise."""
    verdict = is_legal_move(configuration, action)
    if not verdict.valid:
        raise IllegalMove(verdict.feedback.text)
    lists = [list(lst) for lst in configuration.toh_lists]
    lists[LIST_LABELS.index(action.source)].pop()
    lists[LIST_LABELS.index(action.target)].append(action.number)
    return Configuration.from_lists(*lists)


def legal_moves(configuration: Configuration) -> list[MoveAction]:
    """All legal moves from a configuration, in canonical text order."""
    _require_toh(configuration)
    moves = []
    for source in LIST_LABELS:
        src = configuration.toh_lists[LIST_LABELS.index(source)]
        if not src:
            continue
        for target in LIST_LABELS:
            if target == source:
                continue
            action = MoveAction.move(src[-1], source, target)
            if is_legal_move(configuration, action).valid:
                moves.append(action)
    moves.sort(key=lambda a: a.text())
    return moves


def all_moves(n_disks: int) -> list[MoveAction]:
    """Every well-formed move for an n-disk instance, legal or not."""
    return [
        MoveAction.move(number, source, target)
        for number in range(n_disks)
        for source in LIST_LABELS
        for target in LIST_LABELS
        if source != target
    ]


def enumerate_states(n_disks: int) -> list[Configuration]:
    """All 3^n legal configurations, in a fixed assignment order."""
    states = []
    for assignment in product(range(3), repeat=n_disks):
        lists: tuple[list[int], list[int], list[int]] = ([], [], [])
        for number, where in enumerate(assignment):
            lists[where].append(number)
        states.append(Configuration.from_lists(*lists))
    return states


def goal_configuration(n_disks: int) -> Configuration:
    """The canonical goal: every number ascending in list C."""
    return Configuration.from_lists((), (), tuple(range(n_disks)))


def enumerate_problems(n_disks: int) -> list[TohProblem]:
    """One problem per non-goal configuration; 26 for 3 disks, 80 for 4."""
    if n_disks < 2:
        raise InvariantError(f"need at least 2 disks, got {n_disks}")
    goal = goal_configuration(n_disks)
    problems = []
    for state in enumerate_states(n_disks):
        if state == goal:
            continue
        problems.append(
            TohProblem(
                problem_id=f"toh{n_disks}-{len(problems):02d}",
                n_disks=n_disks,
                initial=state,
                goal=goal,
            )
        )
    return problems


@lru_cache(maxsize=None)
def _distance_map(goal: Configuration) -> dict[Configuration, int]:
    # Moves are reversible, so BFS outward from the goal gives distances to it.
    distances = {goal: 0}
    frontier = deque([goal])
    while frontier:
        state = frontier.popleft()
        for action in legal_moves(state):
            nxt = apply_move(state, action)
            if nxt not in distances:
                distances[nxt] = distances[state] + 1
                frontier.append(nxt)
    return distances


def bfs_optimal(configuration: Configuration, goal: Configuration) -> int:
    """Exact minimum number of legal moves from configuration to goal."""
    _require_toh(configuration)
    _require_toh(goal)
    if configuration.n_disks != goal.n_disks:
        raise InvariantError("configuration and goal must have the same disk count")
    return _distance_map(goal)[configuration]


def goal_recursion_subgoal(configuration: Configuration, goal: Configuration) -> Configuration:
    """The single intermediate target produced by the goal-recursion strategy.

    Finds the smallest number not yet parked in list C, clears everything
    blocking it (numbers to its right, plus numbers beyond C's settled prefix)
    onto the auxiliary list in ascending order. Returns the goal itself when
    nothing blocks, so the caller always gets a strictly closer target.
    """
    _require_toh(configuration)
    if configuration == goal:
        raise InvariantError("no subgoal exists when the configuration already matches the goal")
    n = configuration.n_disks
    if goal != goal_configuration(n):
        raise InvariantError("goal recursion assumes the canonical all-in-C goal")
    c_list = configuration.toh_lists[2]
    smallest = 0
    while smallest < len(c_list) and c_list[smallest] == smallest:
        smallest += 1
    # Everything below `smallest` is settled in C, so `smallest` sits at the
    # head of list A or B and everything after it in that list blocks it.
    home = next(i for i in (0, 1) if configuration.toh_lists[i][:1] == (smallest,))
    aux = 1 - home
    blockers = list(configuration.toh_lists[home][1:]) + list(c_list[smallest:])
    lists: list[tuple[int, ...]] = [(), (), tuple(range(smallest))]
    lists[home] = (smallest,)
    lists[aux] = tuple(sorted(list(configuration.toh_lists[aux]) + blockers))
    subgoal = Configuration.from_lists(*lists)
    if subgoal == configuration:
        return goal
    return subgoal
