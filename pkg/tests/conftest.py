"""Shared test fixtures: stub transports for the chat backend."""

from __future__ import annotations

import pytest

from pfc import toh
from pfc.core import TaskKind, parse_actions, parse_configuration


def reply_body(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


def _between(text: str, start: str, end: str | None = None):
    idx = text.rfind(start)
    assert idx >= 0, f"marker {start!r} not found"
    segment = text[idx + len(start):]
    if end is not None and end in segment:
        segment = segment[: segment.index(end)]
    return parse_configuration(segment, TaskKind.TOH)


class ScriptedOracleTransport:
    """Answers rendered module prompts with ground-truth replies.

    Parses the task instance back out of each prompt and responds in the
    reply formats the parsers expect, so a chat-backend run exercises the
    whole render -> complete -> parse loop without a network.
    """

    def __init__(self):
        self.calls = 0

    def __call__(self, payload: dict) -> tuple[int, dict]:
        self.calls += 1
        prompt = payload["messages"][-1]["content"]
        first = payload["messages"][0]["content"]
        if "What heuristic function" in prompt:
            return 200, reply_body("Sum how far each number sits from its goal position.")
        if "Use the heuristic function" in prompt:
            current = _between(prompt, "This is the current configuration:", "This is the goal configuration:")
            goal = _between(prompt, "This is the goal configuration:")
            steps = toh.bfs_optimal(current, goal)
            return 200, reply_body(
                "The minimum number of valid moves required to reach the goal "
                f"configuration from the current configuration is {steps}."
            )
        if "generate a single subgoal" in first:
            task = prompt[prompt.rfind("Here is the task:"):]
            current = _between(task, "This is the current configuration:", "This is the goal configuration:")
            goal = _between(task, "This is the goal configuration:")
            subgoal = toh.goal_recursion_subgoal(current, goal)
            return 200, reply_body("Answer:\nSubgoal:\n" + subgoal.text())
        if "two different valid next moves" in first:
            task = first[first.rfind("Here is the task:"):]
            current = _between(task, "This is the starting configuration:", "This is the goal configuration:")
            goal = _between(task, "This is the goal configuration:")
            ranked = sorted(
                toh.legal_moves(current),
                key=lambda a: (toh.bfs_optimal(toh.apply_move(current, a), goal), a.text()),
            )[:2]
            return 200, reply_body("\n".join(f"{i + 1}. {a.text()}" for i, a in enumerate(ranked)))
        if "check if the proposed move" in first:
            task = prompt[prompt.rfind("Here is the task:"):]
            current = _between(task, "This is the initial configuration:", "Proposed move:")
            move = parse_actions(task, TaskKind.TOH)[-1]
            verdict = toh.is_legal_move(current, move)
            if verdict.valid:
                return 200, reply_body("The move satisfies both Rule #1 and Rule #2, it is valid.")
            return 200, reply_body(verdict.feedback.text)
        if "predict the configuration" in first:
            task = prompt[prompt.rfind("Here is the task:"):]
            current = _between(task, "This is the current configuration:", "Proposed move:")
            move = parse_actions(task, TaskKind.TOH)[-1]
            return 200, reply_body(toh.apply_move(current, move).text())
        if "matches the goal configuration" in first:
            task = prompt[prompt.rfind("Here is the task:"):]
            current = _between(task, "This is the current configuration:", "This is the goal configuration:")
            goal = _between(task, "This is the goal configuration:")
            return 200, reply_body("Hence yes." if current == goal else "Hence no.")
        raise AssertionError("unrecognized prompt:\n" + prompt[:300])


@pytest.fixture
def scripted_transport() -> ScriptedOracleTransport:
    return ScriptedOracleTransport()
