"""Room graph, description text, problem generators and BFS oracle."""

from __future__ import annotations

from collections import deque

import pytest

from pfc import rooms
from pfc.core import InvariantError


GRAPH = rooms.default_graph()


def independent_bfs(graph: rooms.RoomGraph, start: int) -> dict[int, int]:
    distances = {start: 0}
    queue = deque([start])
    adjacency = {n: set() for n in graph.nodes}
    for a, b in graph.edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    while queue:
        node = queue.popleft()
        for neighbor in adjacency[node]:
            if neighbor not in distances:
                distances[neighbor] = distances[node] + 1
                queue.append(neighbor)
    return distances


def test_default_graph_shape():
    assert len(GRAPH.nodes) == 15
    assert GRAPH.rewards and len(GRAPH.rewards) == 2
    values = sorted(GRAPH.rewards.values())
    assert values[0] != values[1]


def test_every_room_has_degree_at_least_two():
    assert all(len(GRAPH.neighbors(room)) >= 2 for room in GRAPH.nodes)


def test_neighbors_symmetric_and_unknown_room():
    for a, b in GRAPH.edges:
        assert b in GRAPH.neighbors(a)
        assert a in GRAPH.neighbors(b)
    with pytest.raises(rooms.UnknownRoom):
        GRAPH.neighbors(99)


def test_graph_invariants_enforced():
    with pytest.raises(InvariantError):
        rooms.RoomGraph(nodes=(0, 1), edges=((0, 0),))
    with pytest.raises(InvariantError):
        rooms.RoomGraph(nodes=(0, 1, 2), edges=((0, 1),))  # disconnected
    with pytest.raises(InvariantError):
        rooms.RoomGraph(nodes=(0, 1, 2), edges=((0, 1), (1, 2)), rewards={0: 5.0, 1: 5.0})


def test_description_contains_connection_sentences():
    text = rooms.render_graph_description(GRAPH)
    assert "room 4 is connected to room 5." in text
    connection_lines = [line for line in text.splitlines() if "is connected to" in line]
    assert len(connection_lines) == len(GRAPH.edges)


def test_description_reward_sentences_optional():
    with_rewards = rooms.render_graph_description(GRAPH, include_rewards=True)
    assert "reward" in with_rewards
    without = rooms.render_graph_description(GRAPH.without_rewards())
    assert "reward" not in without


def test_description_deterministic():
    assert rooms.render_graph_description(GRAPH) == rooms.render_graph_description(rooms.default_graph())


def test_bfs_distance_basics():
    room = GRAPH.nodes[0]
    assert rooms.bfs_distance(GRAPH, room, room) == 0
    a, b = GRAPH.edges[0]
    assert rooms.bfs_distance(GRAPH, a, b) == 1
    with pytest.raises(rooms.UnknownRoom):
        rooms.bfs_distance(GRAPH, room, 99)


def test_bfs_distance_symmetric_and_matches_independent_bfs():
    for start in GRAPH.nodes:
        expected = independent_bfs(GRAPH, start)
        for target in GRAPH.nodes:
            d = rooms.bfs_distance(GRAPH, start, target)
            assert d == expected[target]
            assert d == rooms.bfs_distance(GRAPH, target, start)


@pytest.mark.parametrize("steps", [2, 3, 4])
def test_steppath_generation(steps):
    problems = rooms.generate_steppath(GRAPH, steps, 20, seed=0)
    assert len(problems) == 20
    assert len({(p.start, p.target) for p in problems}) == 20
    for p in problems:
        assert independent_bfs(GRAPH, p.start)[p.target] == steps == p.optimal_steps


def test_steppath_seeded_reproducibility():
    a = rooms.generate_steppath(GRAPH, 3, 20, seed=5)
    b = rooms.generate_steppath(GRAPH, 3, 20, seed=5)
    c = rooms.generate_steppath(GRAPH, 3, 20, seed=6)
    assert a == b
    assert a != c


def test_steppath_rejects_bad_steps_and_oversized_requests():
    with pytest.raises(InvariantError):
        rooms.generate_steppath(GRAPH, 0, 20, seed=0)
    with pytest.raises(rooms.InsufficientPairs):
        rooms.generate_steppath(GRAPH, 4, 10_000, seed=0)


def test_valuepath_generation():
    problems = rooms.generate_valuepath(GRAPH)
    assert len(problems) == 13
    assert all(p.start not in GRAPH.rewards for p in problems)


def test_valuepath_small_graph_counting():
    graph = rooms.RoomGraph(nodes=(0, 1, 2), edges=((0, 1), (1, 2), (0, 2)), rewards={0: 1.0, 2: 3.0})
    assert len(rooms.generate_valuepath(graph)) == 1


def test_valuepath_requires_rewards():
    with pytest.raises(rooms.RewardsMissing):
        rooms.generate_valuepath(GRAPH.without_rewards())


def test_graph_json_round_trip(tmp_path):
    path = tmp_path / "graph.json"
    import json

    path.write_text(json.dumps(GRAPH.to_json_dict()), encoding="utf-8")
    loaded = rooms.RoomGraph.from_file(path)
    assert loaded.nodes == GRAPH.nodes
    assert loaded.edges == GRAPH.edges
    assert loaded.rewards == GRAPH.rewards
