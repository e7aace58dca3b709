"""Shared domain types and the text grammars every module speaks.

Configurations, moves, goals, verdicts and values are immutable; their
canonical text renderings are the identity used for cache keys, action
deduplication and prompt assembly, so structured equality and text equality
must always agree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence


class PfcError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PfcError):
    """Text did not match the expected grammar."""


class InvariantError(PfcError):
    """A value violates a structural invariant of its type."""


class IllegalMove(PfcError):
    """A move was applied to a configuration where it is not legal."""


class EmptyProposal(PfcError):
    """The actor produced no usable action after all attempts."""


class BackendError(PfcError):
    """A module backend failed to produce a usable reply."""


class ConfigError(PfcError):
    """An experiment or client configuration is invalid or incomplete."""


class TaskKind(Enum):
    TOH = "toh"
    GRAPH = "graph"


LIST_LABELS = ("A", "B", "C")


@dataclass(frozen=True)
class Configuration:
    """A task state: three ordered number lists (ToH) or a current room (graph)."""

    task_kind: TaskKind
    toh_lists: tuple[tuple[int, ...], ...] | None = None
    graph_room: int | None = None

    def __post_init__(self) -> None:
        if self.task_kind is TaskKind.TOH:
            if self.graph_room is not None or self.toh_lists is None:
                raise InvariantError("ToH configuration must carry exactly the three lists")
            lists = tuple(tuple(int(x) for x in lst) for lst in self.toh_lists)
            if len(lists) != 3:
                raise InvariantError(f"expected 3 lists, got {len(lists)}")
            object.__setattr__(self, "toh_lists", lists)
            numbers = [x for lst in lists for x in lst]
            n = len(numbers)
            if sorted(numbers) != list(range(n)):
                raise InvariantError(f"lists must partition 0..{n - 1} exactly, got {numbers}")
            for label, lst in zip(LIST_LABELS, lists):
                if any(a >= b for a, b in zip(lst, lst[1:])):
                    raise InvariantError(f"list {label} is not strictly ascending: {list(lst)}")
        else:
            if self.toh_lists is not None or self.graph_room is None:
                raise InvariantError("graph configuration must carry exactly a room")
            if not isinstance(self.graph_room, int) or self.graph_room < 0:
                raise InvariantError(f"room id must be a non-negative integer, got {self.graph_room!r}")

    @classmethod
    def from_lists(cls, a: Sequence[int], b: Sequence[int], c: Sequence[int]) -> "Configuration":
        return cls(TaskKind.TOH, toh_lists=(tuple(a), tuple(b), tuple(c)))

    @classmethod
    def from_room(cls, room: int) -> "Configuration":
        return cls(TaskKind.GRAPH, graph_room=room)

    @property
    def n_disks(self) -> int:
        if self.toh_lists is None:
            raise InvariantError("n_disks is only defined for ToH configurations")
        return sum(len(lst) for lst in self.toh_lists)

    def text(self) -> str:
        return render_configuration(self)


@dataclass(frozen=True)
class MoveAction:
    """A single action: move a number between lists (ToH) or walk to a room (graph)."""

    task_kind: TaskKind
    number: int | None = None
    source: str | None = None
    target: str | None = None
    target_room: int | None = None

    def __post_init__(self) -> None:
        if self.task_kind is TaskKind.TOH:
            if self.target_room is not None:
                raise InvariantError("ToH action must not carry a room")
            if self.number is None or self.number < 0:
                raise InvariantError(f"move number must be a non-negative integer, got {self.number!r}")
            if self.source not in LIST_LABELS or self.target not in LIST_LABELS:
                raise InvariantError(f"list labels must be one of {LIST_LABELS}: {self.source!r} -> {self.target!r}")
            if self.source == self.target:
                raise InvariantError(f"source and target lists must differ, both are {self.source}")
        else:
            if self.number is not None or self.source is not None or self.target is not None:
                raise InvariantError("graph action must carry only a target room")
            if self.target_room is None or self.target_room < 0:
                raise InvariantError(f"target room must be a non-negative integer, got {self.target_room!r}")

    @classmethod
    def move(cls, number: int, source: str, target: str) -> "MoveAction":
        return cls(TaskKind.TOH, number=number, source=source, target=target)

    @classmethod
    def go_to(cls, room: int) -> "MoveAction":
        return cls(TaskKind.GRAPH, target_room=room)

    def text(self) -> str:
        if self.task_kind is TaskKind.TOH:
            return f"Move {self.number} from {self.source} to {self.target}."
        return f"Move to room {self.target_room}."


class GoalKind(Enum):
    TARGET_CONFIGURATION = "target_configuration"
    TARGET_ROOM = "target_room"
    MAX_REWARD = "max_reward"


@dataclass(frozen=True)
class Goal:
    """A target condition: a full configuration, a named room, or the best-reward room."""

    kind: GoalKind
    target_configuration: Configuration | None = None
    target_room: int | None = None
    reward_map: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self) -> None:
        present = {
            "target_configuration": self.target_configuration is not None,
            "target_room": self.target_room is not None,
            "reward_map": self.reward_map is not None,
        }
        expected = {
            GoalKind.TARGET_CONFIGURATION: "target_configuration",
            GoalKind.TARGET_ROOM: "target_room",
            GoalKind.MAX_REWARD: "reward_map",
        }[self.kind]
        for name, is_set in present.items():
            if is_set != (name == expected):
                raise InvariantError(f"goal of kind {self.kind.value} must set exactly {expected!r}")
        if self.reward_map is not None:
            if not self.reward_map:
                raise InvariantError("reward map must not be empty")
            values = [v for _, v in self.reward_map]
            if len(set(values)) != len(values):
                raise InvariantError("reward values must be distinct so the best room is unique")

    @classmethod
    def for_configuration(cls, configuration: Configuration) -> "Goal":
        return cls(GoalKind.TARGET_CONFIGURATION, target_configuration=configuration)

    @classmethod
    def for_room(cls, room: int) -> "Goal":
        return cls(GoalKind.TARGET_ROOM, target_room=room)

    @classmethod
    def for_max_reward(cls, rewards: dict[int, float]) -> "Goal":
        return cls(GoalKind.MAX_REWARD, reward_map=tuple(sorted(rewards.items())))

    @property
    def rewards(self) -> dict[int, float]:
        if self.reward_map is None:
            raise InvariantError("rewards are only defined for max-reward goals")
        return dict(self.reward_map)

    @property
    def best_reward_room(self) -> int:
        rewards = self.rewards
        return max(rewards, key=lambda room: rewards[room])

    def text(self) -> str:
        if self.kind is GoalKind.TARGET_CONFIGURATION:
            return self.target_configuration.text()
        if self.kind is GoalKind.TARGET_ROOM:
            return f"room {self.target_room}"
        return "the room with the largest reward"


@dataclass(frozen=True)
class Feedback:
    """An explanation attached to an invalid action, fed back to the actor."""

    text: str
    action: MoveAction

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise InvariantError("feedback text must be non-empty")


@dataclass(frozen=True)
class Verdict:
    """A validity judgement for one proposed action."""

    valid: bool
    feedback: Feedback | None = None

    def __post_init__(self) -> None:
        if self.valid != (self.feedback is None):
            raise InvariantError("feedback must be present exactly when the verdict is invalid")


@dataclass(frozen=True, order=True)
class Value:
    """A state value: the negated estimate of remaining moves, so argmax picks best."""

    value: float

    def __post_init__(self) -> None:
        if self.value > 0:
            raise InvariantError(f"values are negated step estimates and must be <= 0, got {self.value}")


@dataclass(frozen=True)
class Plan:
    """An ordered action sequence emitted for one problem."""

    actions: tuple[MoveAction, ...] = ()

    def __len__(self) -> int:
        return len(self.actions)

    def texts(self) -> list[str]:
        return [action.text() for action in self.actions]


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for one plan generation: branching, depth, budget and module toggles."""

    branches: int = 2
    depth: int = 2
    budget: int = 10
    use_decomposer: bool = True
    use_search: bool = True
    use_predictor: bool = True
    use_monitor: bool = True
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("branches", "depth", "budget"):
            if getattr(self, name) < 1:
                raise InvariantError(f"{name} must be >= 1, got {getattr(self, name)}")


class ModuleBackend(Protocol):
    """The six-role contract satisfied by both the oracle and the chat backends."""

    def decompose(self, state: Configuration, goal: Goal) -> list[Goal]: ...

    def propose(
        self, state: Configuration, goal: Goal, feedback: Sequence[Feedback], branches: int
    ) -> list[MoveAction]: ...

    def assess(self, state: Configuration, actions: Sequence[MoveAction]) -> list[Verdict]: ...

    def predict(self, state: Configuration, action: MoveAction) -> Configuration: ...

    def evaluate(self, state: Configuration, goal: Goal) -> Value: ...

    def check(self, state: Configuration, goal: Goal) -> bool: ...


def render_configuration(configuration: Configuration) -> str:
    """Canonical text for a configuration: three "X = [...]" lines, or a room phrase."""
    if configuration.task_kind is TaskKind.TOH:
        lines = []
        for label, lst in zip(LIST_LABELS, configuration.toh_lists):
            lines.append(f"{label} = [{', '.join(str(x) for x in lst)}]")
        return "\n".join(lines)
    return f"room {configuration.graph_room}"


_LIST_LINE = re.compile(r"^[ \t]*([ABC])[ \t]*=[ \t]*\[([ \t]*(?:\d+[ \t]*(?:,[ \t]*\d+[ \t]*)*)?)\][ \t]*\.?[ \t]*$", re.MULTILINE)
_ROOM_PHRASE = re.compile(r"\broom[ \t]+(\d+)\b", re.IGNORECASE)


def parse_configuration(text: str, task_kind: TaskKind | None = None) -> Configuration:
    """Parse a configuration out of free text; the last complete rendering wins.

    Raises ParseError when no rendering is found, InvariantError when the
    parsed lists violate configuration invariants.
    """
    if task_kind in (None, TaskKind.TOH):
        matches = list(_LIST_LINE.finditer(text))
        labels = [m.group(1) for m in matches]
        for start in range(len(matches) - 3, -1, -1):
            if labels[start : start + 3] == ["A", "B", "C"]:
                lists = []
                for m in matches[start : start + 3]:
                    inner = m.group(2).strip()
                    lists.append(tuple(int(x) for x in inner.split(",")) if inner else ())
                return Configuration.from_lists(*lists)
        if task_kind is TaskKind.TOH:
            raise ParseError(f"no A/B/C list rendering found in {text!r}")
    room_matches = list(_ROOM_PHRASE.finditer(text))
    if room_matches:
        return Configuration.from_room(int(room_matches[-1].group(1)))
    raise ParseError(f"no configuration rendering found in {text!r}")


_TOH_MOVE = re.compile(r"\bmove[ \t]+(\d+)[ \t]+from[ \t]+(?:list[ \t]+)?([ABC])\b[ \t]*to[ \t]+(?:list[ \t]+)?([ABC])\b", re.IGNORECASE)
_GRAPH_MOVE = re.compile(r"\bmove[ \t]+to[ \t]+room[ \t]+(\d+)\b", re.IGNORECASE)


def parse_actions(text: str, task_kind: TaskKind = TaskKind.TOH) -> list[MoveAction]:
    """Parse every action matching the move grammar, in order of appearance.

    Raises ParseError when no line matches; a matching but self-targeted ToH
    move raises InvariantError.
    """
    actions: list[MoveAction] = []
    if task_kind is TaskKind.TOH:
        for m in _TOH_MOVE.finditer(text):
            actions.append(MoveAction.move(int(m.group(1)), m.group(2).upper(), m.group(3).upper()))
    else:
        for m in _GRAPH_MOVE.finditer(text):
            actions.append(MoveAction.go_to(int(m.group(1))))
    if not actions:
        raise ParseError(f"no move matching the action grammar in {text!r}")
    return actions
