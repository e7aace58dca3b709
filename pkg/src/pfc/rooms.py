"""Room-graph traversal environments for the two navigation benchmarks.

A community-structured room graph rendered into natural language, plus
problem generators (shortest-path and best-reward variants) and the BFS
oracles used for scoring. The default topology ships as a JSON data file so
it can be swapped without code changes.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import PfcError, InvariantError


class UnknownRoom(PfcError):
    """A room id that is not a node of the graph."""


class InsufficientPairs(PfcError):
    """Not enough start/target pairs exist at the requested distance."""


class RewardsMissing(PfcError):
    """The graph carries no rewards but a reward task was requested."""


@dataclass(frozen=True)
class SteppathProblem:
    problem_id: str
    start: int
    target: int
    optimal_steps: int


@dataclass(frozen=True)
class ValuepathProblem:
    problem_id: str
    start: int


@dataclass
class RoomGraph:
    """An undirected, connected room graph, optionally carrying two rewards.

    Treated as immutable once constructed; safe to share across workers.
    """

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    rewards: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.nodes = tuple(sorted(set(int(n) for n in self.nodes)))
        normalized = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise InvariantError(f"self-loop on room {a} is not allowed")
            if a not in self.nodes or b not in self.nodes:
                raise InvariantError(f"edge ({a}, {b}) references an unknown room")
            normalized.add((min(a, b), max(a, b)))
        self.edges = tuple(sorted(normalized))
        self._adjacency: dict[int, frozenset[int]] = {}
        adjacency: dict[int, set[int]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adjacency[a].add(b)
            adjacency[b].add(a)
        self._adjacency = {n: frozenset(vs) for n, vs in adjacency.items()}
        self._distance_maps: dict[int, dict[int, int]] = {}
        if self.rewards:
            self.rewards = {int(k): float(v) for k, v in self.rewards.items()}
            if len(self.rewards) != 2:
                raise InvariantError(f"rewards must sit on exactly two rooms, got {len(self.rewards)}")
            if any(room not in self.nodes for room in self.rewards):
                raise InvariantError("reward rooms must be nodes of the graph")
            values = list(self.rewards.values())
            if values[0] == values[1] or any(v <= 0 for v in values):
                raise InvariantError("the two rewards must be distinct positive values")
        seen = {self.nodes[0]}
        frontier = deque([self.nodes[0]])
        while frontier:
            room = frontier.popleft()
            for neighbor in self._adjacency[room]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    frontier.append(neighbor)
        if len(seen) != len(self.nodes):
            raise InvariantError("the room graph must be connected")

    def neighbors(self, room: int) -> frozenset[int]:
        if room not in self._adjacency:
            raise UnknownRoom(f"room {room} is not in the graph")
        return self._adjacency[room]

    def without_rewards(self) -> "RoomGraph":
        return RoomGraph(nodes=self.nodes, edges=self.edges)

    def to_json_dict(self) -> dict:
        doc = {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}
        if self.rewards:
            doc["rewards"] = {str(k): v for k, v in sorted(self.rewards.items())}
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RoomGraph":
        return cls(
            nodes=tuple(doc["nodes"]),
            edges=tuple((a, b) for a, b in doc["edges"]),
            rewards={int(k): float(v) for k, v in doc.get("rewards", {}).items()},
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RoomGraph":
        with open(path, encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def default_graph() -> RoomGraph:
    """The packaged 15-room graph: three 5-room communities bridged in a ring."""
    data = resources.files("pfc").joinpath("data", "community_graph.json").read_text(encoding="utf-8")
    return RoomGraph.from_json_dict(json.loads(data))


def render_graph_description(graph: RoomGraph, include_rewards: bool = True) -> str:
    """One connection sentence per edge, in deterministic order, then reward sentences."""
    sentences = [f"room {a} is connected to room {b}." for a, b in graph.edges]
    if include_rewards and graph.rewards:
        for room, value in sorted(graph.rewards.items()):
            sentences.append(f"room {room} contains a reward of {value:g}.")
    return "\n".join(sentences)


def _distances_from(graph: RoomGraph, source: int) -> dict[int, int]:
    cached = graph._distance_maps.get(source)
    if cached is not None:
        return cached
    distances = {source: 0}
    frontier = deque([source])
    while frontier:
        room = frontier.popleft()
        for neighbor in graph.neighbors(room):
            if neighbor not in distances:
                distances[neighbor] = distances[room] + 1
                frontier.append(neighbor)
    graph._distance_maps[source] = distances
    return distances


def bfs_distance(graph: RoomGraph, a: int, b: int) -> int:
    """Exact shortest-path length between two rooms; 0 iff they are the same."""
    if a not in graph._adjacency:
        raise UnknownRoom(f"room {a} is not in the graph")
    if b not in graph._adjacency:
        raise UnknownRoom(f"room {b} is not in the graph")
    return _distances_from(graph, a)[b]


def generate_steppath(graph: RoomGraph, steps: int, count: int, seed: int = 0) -> list[SteppathProblem]:
    """Sample start/target pairs at exactly the requested BFS distance, without replacement."""
    if steps not in (2, 3, 4):
        raise InvariantError(f"steppath problems use 2, 3 or 4 steps, got {steps}")
    pairs = [
        (start, target)
        for start in graph.nodes
        for target in graph.nodes
        if start != target and _distances_from(graph, start)[target] == steps
    ]
    if len(pairs) < count:
        raise InsufficientPairs(f"only {len(pairs)} pairs at distance {steps}, need {count}")
    rng = random.Random(f"steppath:{seed}:{steps}")
    sample = rng.sample(pairs, count)
    return [
        SteppathProblem(
            problem_id=f"steppath{steps}-{i:02d}",
            start=start,
            target=target,
            optimal_steps=steps,
        )
        for i, (start, target) in enumerate(sample)
    ]


def generate_valuepath(graph: RoomGraph) -> list[ValuepathProblem]:
    """One problem per non-reward room; 13 with the default 15-room graph."""
    if not graph.rewards:
        raise RewardsMissing("the graph carries no rewards")
    starts = [room for room in graph.nodes if room not in graph.rewards]
    return [
        ValuepathProblem(problem_id=f"valuepath-{i:02d}", start=start)
        for i, start in enumerate(starts)
    ]
