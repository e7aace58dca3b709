"""Chat-completion backend: transport, prompt assembly, and reply parsing.

The transport is injectable so every test runs against a stub; the real one
posts JSON chat-completion bodies with retry/backoff and a global concurrency
cap. Prompt templates live as plain-text files under ``prompts/`` with
``{{slot}}`` markers, one file per (role, task).
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

import requests

from . import rooms
from .core import (
    BackendError,
    ConfigError,
    Configuration,
    EmptyProposal,
    Feedback,
    Goal,
    GoalKind,
    InvariantError,
    MoveAction,
    ParseError,
    TaskKind,
    Value,
    Verdict,
    parse_actions,
    parse_configuration,
)

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "PFC_LLM_ENDPOINT"
API_KEY_ENV = "PFC_LLM_API_KEY"
MODEL_ENV = "PFC_LLM_MODEL"


class TransportError(BackendError):
    """The request could not be completed after retries."""


class AuthError(BackendError):
    """The endpoint rejected the credentials."""


class RateLimited(BackendError):
    """The endpoint kept rate-limiting past the retry budget."""


class UnparseableVerdict(BackendError):
    """No valid/invalid or yes/no token could be read from the reply."""


class UnparseableValue(BackendError):
    """No usable step estimate could be read from the reply."""


@dataclass
class LlmConfig:
    endpoint: str
    model: str
    api_key: str = ""
    top_p: float = 0.0
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4
    retry_backoff: float = 0.5
    temperature_schedule: str = "additive"  # or "multiplicative", the literal reading

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        values = {
            "endpoint": os.environ.get(ENDPOINT_ENV, ""),
            "model": os.environ.get(MODEL_ENV, ""),
            "api_key": os.environ.get(API_KEY_ENV, ""),
        }
        values.update(overrides)
        missing = [
            env
            for env, key in ((ENDPOINT_ENV, "endpoint"), (MODEL_ENV, "model"), (API_KEY_ENV, "api_key"))
            if not values.get(key)
        ]
        if missing:
            raise ConfigError(f"missing credentials: set {', '.join(missing)}")
        return cls(**values)


Transport = Callable[[dict], "tuple[int, dict]"]


def http_transport(config: LlmConfig) -> Transport:
    def send(payload: dict) -> tuple[int, dict]:
        response = requests.post(
            config.endpoint,
            json=payload,
            timeout=config.timeout,
            headers={
                "Authorization": f"Bearer {config.api_key}",
                "Content-Type": "application/json",
            },
        )
        try:
            body = response.json()
        except ValueError:
            body = {}
        return response.status_code, body
    return send


class ChatClient:
    """Thread-safe chat-completion client with retries and a concurrency cap."""

    def __init__(self, config: LlmConfig, transport: Transport | None = None):
        self.config = config
        self._transport = transport or http_transport(config)
        self._semaphore = threading.BoundedSemaphore(config.max_concurrent)
        self._log_lock = threading.Lock()
        self.request_log: list[dict] = []

    def complete(self, messages: Sequence[dict], temperature: float | None = None) -> str:
        if not messages:
            raise InvariantError("messages must be non-empty")
        payload = {
            "model": self.config.model,
            "messages": list(messages),
            "temperature": self.config.temperature if temperature is None else temperature,
            "top_p": self.config.top_p,
        }
        with self._log_lock:
            self.request_log.append(payload)
        last_error: BackendError | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.retry_backoff * (2 ** (attempt - 1)))
                logger.warning("retrying chat request (attempt %d): %s", attempt + 1, last_error)
            try:
                with self._semaphore:
                    status, body = self._transport(payload)
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if status == 429:
                last_error = RateLimited("endpoint returned HTTP 429")
                continue
            if status >= 500:
                last_error = TransportError(f"endpoint returned HTTP {status}")
                continue
            if status != 200:
                raise TransportError(f"unexpected HTTP {status}: {body}")
            try:
                return body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion body: {exc}")
        raise last_error if last_error is not None else TransportError("no attempts made")


def load_template(role: str, task: str) -> str:
    name = f"{role}_{task}.txt"
    try:
        return resources.files("pfc").joinpath("prompts", name).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no prompt template {name!r}")


_SLOT = re.compile(r"\{\{(\w+)\}\}")


def render_template(template: str, **slots: str) -> str:
    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in slots:
            raise ConfigError(f"no value for template slot {{{{{name}}}}}")
        return slots[name]
    return _SLOT.sub(replace, template)


def _user(content: str) -> dict:
    return {"role": "user", "content": content}


def _assistant(content: str) -> dict:
    return {"role": "assistant", "content": content}


_VERDICT_TOKEN = re.compile(r"\b(invalid|valid)\b", re.IGNORECASE)
_YESNO_TOKEN = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_ESTIMATE = re.compile(r"\bis\s+(-?\d+)\b")


def parse_verdict_reply(reply: str) -> bool:
    """True/False from the last valid/invalid token in the reply."""
    tokens = _VERDICT_TOKEN.findall(reply)
    if not tokens:
        raise UnparseableVerdict(f"no validity token in {reply!r}")
    return tokens[-1].lower() == "valid"


def parse_yes_no_reply(reply: str) -> bool:
    tokens = _YESNO_TOKEN.findall(reply)
    if not tokens:
        raise UnparseableVerdict(f"no yes/no token in {reply!r}")
    return tokens[-1].lower() == "yes"


def parse_value_reply(reply: str) -> Value:
    """The negated "... is <N>." estimate; N must be a non-negative integer."""
    matches = _ESTIMATE.findall(reply)
    if not matches:
        raise UnparseableValue(f"no step estimate in {reply!r}")
    estimate = int(matches[-1])
    if estimate < 0:
        raise UnparseableValue(f"step estimate must be non-negative, got {estimate}")
    return Value(-float(estimate))


def parse_subgoal_reply(reply: str) -> Configuration:
    """The configuration under the reply's "Subgoal:" marker."""
    marker = reply.lower().rfind("subgoal:")
    if marker < 0:
        raise ParseError(f"no 'Subgoal:' marker in {reply!r}")
    return parse_configuration(reply[marker:], TaskKind.TOH)


class LlmBackend:
    """All six roles realized through prompt templates and a chat client.

    ``task`` selects the template set: "toh", "steppath" or "valuepath".
    """

    def __init__(
        self,
        client: ChatClient,
        task: str,
        graph: rooms.RoomGraph | None = None,
        max_propose_attempts: int = 10,
    ):
        if task not in ("toh", "steppath", "valuepath"):
            raise ConfigError(f"unknown task {task!r}")
        self.client = client
        self.task = task
        self.task_kind = TaskKind.TOH if task == "toh" else TaskKind.GRAPH
        self.graph = graph
        if self.task_kind is TaskKind.GRAPH and graph is None:
            raise ConfigError("graph tasks need the room graph for prompt assembly")
        self.max_propose_attempts = max_propose_attempts
        self._heuristic_lock = threading.Lock()
        self._heuristic_opening: str | None = None
        self._heuristic_reply: str | None = None

    @property
    def base_temperature(self) -> float:
        return self.client.config.temperature

    # -- prompt assembly -----------------------------------------------

    def _render(self, role: str, **slots: str) -> str:
        if self.task_kind is TaskKind.GRAPH:
            slots.setdefault(
                "graph",
                rooms.render_graph_description(self.graph, include_rewards=self.task == "valuepath"),
            )
        return render_template(load_template(role, self.task), **slots)

    def _attempt_temperature(self, attempt: int) -> float:
        base = self.client.config.temperature
        if self.client.config.temperature_schedule == "multiplicative":
            return base * (0.1 ** attempt)
        return base + 0.1 * attempt

    def _ask(self, messages: Sequence[dict], parse, temperature: float | None = None):
        """One completion with a single same-temperature retry on unparseable replies."""
        last: Exception | None = None
        for _ in range(2):
            reply = self.client.complete(messages, temperature=temperature)
            try:
                return parse(reply)
            except (ParseError, InvariantError, UnparseableVerdict, UnparseableValue) as exc:
                last = exc
        if isinstance(last, BackendError):
            raise last
        raise BackendError(f"unparseable reply: {last}")

    # -- role contract -------------------------------------------------

    def decompose(self, state: Configuration, goal: Goal) -> list[Goal]:
        prompt = self._render("decomposer", configuration=state.text(), goal=goal.text())
        def parse(reply: str) -> Configuration:
            subgoal = parse_subgoal_reply(reply)
            if subgoal.n_disks != state.n_disks:
                raise InvariantError("subgoal must use the same numbers as the state")
            return subgoal
        subgoal = self._ask([_user(prompt)], parse)
        return [Goal.for_configuration(subgoal)]

    def propose(
        self, state: Configuration, goal: Goal, feedback: Sequence[Feedback], branches: int
    ) -> list[MoveAction]:
        if branches != 2:
            raise ConfigError("the actor prompt requests exactly two moves; run with --branches 2")
        messages = [_user(self._render("actor", configuration=state.text(), goal=goal.text()))]
        for item in feedback:
            messages.append(_user(item.text))
        found: list[MoveAction] = []
        seen: set[str] = set()
        for attempt in range(self.max_propose_attempts):
            reply = self.client.complete(messages, temperature=self._attempt_temperature(attempt))
            try:
                moves = parse_actions(reply, self.task_kind)
            except ParseError:
                moves = []
            except InvariantError:
                moves = []
            for move in moves:
                if move.text() not in seen:
                    seen.add(move.text())
                    found.append(move)
            if len(found) >= branches:
                return found[:branches]
        if found:
            return found
        raise EmptyProposal(f"no parseable move in {self.max_propose_attempts} attempts")

    def assess(self, state: Configuration, actions: Sequence[MoveAction]) -> list[Verdict]:
        verdicts = []
        for action in actions:
            prompt = self._render("monitor", configuration=state.text(), move=action.text())
            def parse(reply: str) -> Verdict:
                if parse_verdict_reply(reply):
                    return Verdict(valid=True)
                return Verdict(valid=False, feedback=Feedback(text=reply, action=action))
            verdicts.append(self._ask([_user(prompt)], parse))
        return verdicts

    def predict(self, state: Configuration, action: MoveAction) -> Configuration:
        if self.task_kind is TaskKind.GRAPH:
            # The action names the next room outright; no completion needed.
            return Configuration.from_room(action.target_room)
        prompt = self._render("predictor", configuration=state.text(), move=action.text())
        def parse(reply: str) -> Configuration:
            predicted = parse_configuration(reply, TaskKind.TOH)
            if predicted.n_disks != state.n_disks:
                raise InvariantError("prediction must use the same numbers as the state")
            return predicted
        return self._ask([_user(prompt)], parse)

    def evaluate(self, state: Configuration, goal: Goal) -> Value:
        if self.task_kind is TaskKind.GRAPH:
            prompt = self._render("evaluator", configuration=state.text(), goal=goal.text())
            return self._ask([_user(prompt)], parse_value_reply)
        # Two-phase conversation: the first turn elicits a heuristic once per
        # run; later calls splice the cached reply into the history.
        with self._heuristic_lock:
            if self._heuristic_reply is None:
                self._heuristic_opening = self._render("evaluator")
                self._heuristic_reply = self.client.complete([_user(self._heuristic_opening)])
            opening, heuristic = self._heuristic_opening, self._heuristic_reply
        followup = self._render("evaluator_followup", configuration=state.text(), goal=goal.text())
        messages = [_user(opening), _assistant(heuristic), _user(followup)]
        return self._ask(messages, parse_value_reply)

    def check(self, state: Configuration, goal: Goal) -> bool:
        prompt = self._render("coordinator", configuration=state.text(), goal=goal.text())
        return self._ask([_user(prompt)], parse_yes_no_reply)

    def full_solution(self, state: Configuration, goal: Goal, mode: str = "zero_shot") -> list[MoveAction]:
        """Baseline runner: one completion, the whole move sequence parsed out."""
        if mode not in ("zero_shot", "icl"):
            raise ConfigError(f"unknown baseline mode {mode!r}")
        prompt = self._render(f"full_{mode}", configuration=state.text(), goal=goal.text())
        reply = self.client.complete([_user(prompt)])
        return parse_actions(reply, self.task_kind)
