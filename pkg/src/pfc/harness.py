"""Benchmark harness: problem sets, method execution, scoring, metrics and tables.

Solved/invalid metrics are always decided by replaying emitted plans on the
ground-truth simulator, never by module self-reports. Traces are JSON-lines,
one file per problem-run, with a final line carrying the scored outcome so
metrics can be recomputed from traces alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import rooms, toh
from .core import (
    ConfigError,
    Configuration,
    Goal,
    GoalKind,
    ModuleBackend,
    MoveAction,
    PfcError,
    Plan,
    SearchConfig,
    TaskKind,
)
from .llm import ChatClient, LlmBackend, LlmConfig, Transport
from .oracle import NoiseProfile, OracleBackend
from .orchestrator import RunRecord, Trace, generate_plan

TASKS = ("toh3", "toh4", "steppath", "valuepath")
METHODS = ("pfc", "zero_shot", "icl")
BACKENDS = ("oracle", "llm")

STEPPATH_STEP_COUNTS = (2, 3, 4)

# Per-task plan budgets and module toggles. Graph tasks never use a separate
# predictor or the decomposer, and the shortest-path task skips tree search.
TASK_DEFAULTS = {
    "toh3": dict(budget=10, use_decomposer=True, use_search=True, use_predictor=True, use_monitor=True),
    "toh4": dict(budget=20, use_decomposer=True, use_search=True, use_predictor=True, use_monitor=True),
    "steppath": dict(budget=6, use_decomposer=False, use_search=False, use_predictor=False, use_monitor=True),
    "valuepath": dict(budget=6, use_decomposer=False, use_search=True, use_predictor=False, use_monitor=True),
}

# Initial states used as worked examples inside the actor prompt; the 3-disk
# evaluation set leaves them out.
ACTOR_EXAMPLE_STARTS = (
    ((0, 1), (2,), ()),
    ((1,), (0,), (2,)),
)

METHOD_LABELS = {"pfc": "LLM-PFC", "zero_shot": "Zero-shot", "icl": "ICL"}


class TraceFormatError(PfcError):
    """A trace file could not be read back into outcomes."""


@dataclass(frozen=True)
class ProblemSpec:
    problem_id: str
    task: str
    initial: Configuration
    goal: Goal
    optimal_steps: int


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def default_excluded_ids() -> tuple[str, ...]:
    """The 3-disk problems whose starts appear as in-context actor examples."""
    starts = {Configuration.from_lists(*lists) for lists in ACTOR_EXAMPLE_STARTS}
    return tuple(p.problem_id for p in toh.enumerate_problems(3) if p.initial in starts)


@dataclass(frozen=True)
class ResolvedExperiment:
    task: str
    method: str
    backend: str
    branches: int
    depth: int
    budget: int
    runs: int
    seed: int
    use_decomposer: bool
    use_search: bool
    use_predictor: bool
    use_monitor: bool
    noise: NoiseProfile
    excluded_problem_ids: tuple[str, ...]
    steppath_count: int
    graph_file: str | None
    workers: int | None
    out_dir: str | None
    label: str

    @property
    def is_graph_task(self) -> bool:
        return self.task in ("steppath", "valuepath")

    def config_json_dict(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "backend": self.backend,
            "branches": self.branches,
            "depth": self.depth,
            "budget": self.budget,
            "runs": self.runs,
            "seed": self.seed,
            "use_decomposer": self.use_decomposer,
            "use_search": self.use_search,
            "use_predictor": self.use_predictor,
            "use_monitor": self.use_monitor,
            "noise": {
                "invalid_action_rate": self.noise.invalid_action_rate,
                "evaluator_error_bias": self.noise.evaluator_error_bias,
                "monitor_false_accept_rate": self.noise.monitor_false_accept_rate,
                "seed": self.noise.seed,
            },
            "excluded_problem_ids": list(self.excluded_problem_ids),
            "steppath_count": self.steppath_count,
            "label": self.label,
        }


@dataclass
class ExperimentConfig:
    """User-facing experiment description; `resolved()` applies task defaults."""

    task: str
    method: str = "pfc"
    backend: str = "oracle"
    branches: int = 2
    depth: int = 2
    budget: int | None = None
    runs: int = 1
    seed: int = 0
    use_decomposer: bool | None = None
    use_search: bool | None = None
    use_predictor: bool | None = None
    use_monitor: bool | None = None
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    excluded_problem_ids: tuple[str, ...] | None = None
    steppath_count: int = 20
    graph_file: str | None = None
    workers: int | None = None
    out_dir: str | None = None

    def resolved(self) -> ResolvedExperiment:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}, expected one of {BACKENDS}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.branches < 1 or self.depth < 1:
            raise ConfigError("branches and depth must be >= 1")
        defaults = TASK_DEFAULTS[self.task]
        budget = self.budget if self.budget is not None else defaults["budget"]
        if budget < 1:
            raise ConfigError(f"budget must be >= 1, got {budget}")
        toggles = {}
        for name in ("use_decomposer", "use_search", "use_predictor", "use_monitor"):
            explicit = getattr(self, name)
            toggles[name] = defaults[name] if explicit is None else explicit
        if self.task in ("steppath", "valuepath"):
            if toggles["use_decomposer"]:
                raise ConfigError("graph tasks do not use the decomposer")
            if toggles["use_predictor"]:
                raise ConfigError("graph tasks do not use a separate predictor")
        if self.task == "steppath" and toggles["use_search"]:
            raise ConfigError("the shortest-path task does not use the search loop")
        excluded = self.excluded_problem_ids
        if excluded is None:
            excluded = default_excluded_ids() if self.task == "toh3" else ()
        label = METHOD_LABELS[self.method]
        if self.method == "pfc":
            for flag, suffix in (
                ("use_decomposer", " w/o Task Decomposer"),
                ("use_search", " w/o Tree Search"),
                ("use_monitor", " w/o Monitor"),
                ("use_predictor", " w/o Predictor"),
            ):
                if defaults[flag] and not toggles[flag]:
                    label += suffix
        return ResolvedExperiment(
            task=self.task,
            method=self.method,
            backend=self.backend,
            branches=self.branches,
            depth=self.depth,
            budget=budget,
            runs=self.runs,
            seed=self.seed,
            noise=self.noise,
            excluded_problem_ids=tuple(excluded),
            steppath_count=self.steppath_count,
            graph_file=self.graph_file,
            workers=self.workers,
            out_dir=self.out_dir,
            label=label,
            **toggles,
        )


def load_graph(resolved: ResolvedExperiment) -> rooms.RoomGraph:
    if resolved.graph_file:
        return rooms.RoomGraph.from_file(resolved.graph_file)
    return rooms.default_graph()


def build_problem_set(resolved: ResolvedExperiment) -> tuple[list[ProblemSpec], rooms.RoomGraph | None]:
    if resolved.task in ("toh3", "toh4"):
        n = 3 if resolved.task == "toh3" else 4
        specs = []
        for problem in toh.enumerate_problems(n):
            if problem.problem_id in resolved.excluded_problem_ids:
                continue
            specs.append(
                ProblemSpec(
                    problem_id=problem.problem_id,
                    task=resolved.task,
                    initial=problem.initial,
                    goal=Goal.for_configuration(problem.goal),
                    optimal_steps=toh.bfs_optimal(problem.initial, problem.goal),
                )
            )
        return specs, None
    graph = load_graph(resolved)
    if resolved.task == "steppath":
        specs = []
        for steps in STEPPATH_STEP_COUNTS:
            for problem in rooms.generate_steppath(graph, steps, resolved.steppath_count, resolved.seed):
                specs.append(
                    ProblemSpec(
                        problem_id=problem.problem_id,
                        task=resolved.task,
                        initial=Configuration.from_room(problem.start),
                        goal=Goal.for_room(problem.target),
                        optimal_steps=problem.optimal_steps,
                    )
                )
        return specs, graph
    goal = Goal.for_max_reward(graph.rewards)
    best = goal.best_reward_room
    specs = [
        ProblemSpec(
            problem_id=problem.problem_id,
            task=resolved.task,
            initial=Configuration.from_room(problem.start),
            goal=goal,
            optimal_steps=rooms.bfs_distance(graph, problem.start, best),
        )
        for problem in rooms.generate_valuepath(graph)
    ]
    return specs, graph


# -- scoring -----------------------------------------------------------


def goal_satisfied(state: Configuration, goal: Goal) -> bool:
    if goal.kind is GoalKind.TARGET_CONFIGURATION:
        return state == goal.target_configuration
    if goal.kind is GoalKind.TARGET_ROOM:
        return state.graph_room == goal.target_room
    return state.graph_room == goal.best_reward_room


def replay_plan(
    problem: ProblemSpec, plan: Plan, graph: rooms.RoomGraph | None = None
) -> tuple[bool, int, int]:
    """Step the ground-truth simulator through a plan.

    Illegal actions are counted and skipped (the state does not change).
    Returns (goal reached at the end, illegal action count, plan length).
    """
    state = problem.initial
    invalid = 0
    for action in plan.actions:
        if state.task_kind is TaskKind.TOH:
            if toh.is_legal_move(state, action).valid:
                state = toh.apply_move(state, action)
            else:
                invalid += 1
        else:
            if graph is None:
                raise ConfigError("replaying a graph plan needs the room graph")
            if (
                action.target_room in graph.nodes
                and action.target_room in graph.neighbors(state.graph_room)
            ):
                state = Configuration.from_room(action.target_room)
            else:
                invalid += 1
    return goal_satisfied(state, problem.goal), invalid, len(plan)


def score_record(
    record: RunRecord, problem: ProblemSpec, graph: rooms.RoomGraph | None = None
) -> RunRecord:
    reached, invalid, length = replay_plan(problem, record.plan, graph)
    record.solved_any = reached
    record.solved_strict = reached and invalid == 0
    record.invalid_in_plan = invalid
    record.plan_length = length
    record.optimal_steps = problem.optimal_steps
    return record


# -- metrics -----------------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    """The replay-scored result of one problem in one run."""

    problem_id: str
    run_index: int
    solved_strict: bool
    solved_any: bool
    invalid_in_plan: int
    plan_length: int
    optimal_steps: int
    error: str | None = None

    @classmethod
    def from_record(cls, record: RunRecord) -> "Outcome":
        return cls(
            problem_id=record.problem_id,
            run_index=record.run_index,
            solved_strict=bool(record.solved_strict),
            solved_any=bool(record.solved_any),
            invalid_in_plan=int(record.invalid_in_plan or 0),
            plan_length=int(record.plan_length or 0),
            optimal_steps=int(record.optimal_steps or 0),
            error=record.error,
        )


@dataclass(frozen=True)
class RunMetrics:
    run_index: int
    n_problems: int
    fraction_solved_strict: float
    fraction_solved_any: float
    fraction_invalid_actions: float
    avg_plan_steps: float | None
    plan_steps_by_bucket: tuple[tuple[int, float], ...]
    fraction_solved_by_bucket: tuple[tuple[int, float], ...]
    fraction_invalid_by_bucket: tuple[tuple[int, float], ...]
    n_errors: int

    def to_json_dict(self) -> dict:
        return {
            "run_index": self.run_index,
            "n_problems": self.n_problems,
            "fraction_solved_strict": self.fraction_solved_strict,
            "fraction_solved_any": self.fraction_solved_any,
            "fraction_invalid_actions": self.fraction_invalid_actions,
            "avg_plan_steps": self.avg_plan_steps,
            "plan_steps_by_bucket": {str(k): v for k, v in self.plan_steps_by_bucket},
            "fraction_solved_by_bucket": {str(k): v for k, v in self.fraction_solved_by_bucket},
            "fraction_invalid_by_bucket": {str(k): v for k, v in self.fraction_invalid_by_bucket},
            "n_errors": self.n_errors,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RunMetrics":
        def buckets(name):
            return tuple(sorted((int(k), v) for k, v in doc[name].items()))
        return cls(
            run_index=doc["run_index"],
            n_problems=doc["n_problems"],
            fraction_solved_strict=doc["fraction_solved_strict"],
            fraction_solved_any=doc["fraction_solved_any"],
            fraction_invalid_actions=doc["fraction_invalid_actions"],
            avg_plan_steps=doc["avg_plan_steps"],
            plan_steps_by_bucket=buckets("plan_steps_by_bucket"),
            fraction_solved_by_bucket=buckets("fraction_solved_by_bucket"),
            fraction_invalid_by_bucket=buckets("fraction_invalid_by_bucket"),
            n_errors=doc["n_errors"],
        )


@dataclass(frozen=True)
class MetricsSummary:
    task: str
    method: str
    label: str
    runs: int
    n_problems: int
    per_run: tuple[RunMetrics, ...]
    fraction_solved_strict: float
    fraction_solved_strict_sem: float | None
    fraction_solved_any: float
    fraction_solved_any_sem: float | None
    fraction_invalid_actions: float
    fraction_invalid_actions_sem: float | None
    avg_plan_steps: float | None
    plan_steps_by_bucket: tuple[tuple[int, float], ...]
    fraction_solved_by_bucket: tuple[tuple[int, float], ...]
    fraction_invalid_by_bucket: tuple[tuple[int, float], ...]

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "label": self.label,
            "runs": self.runs,
            "n_problems": self.n_problems,
            "per_run": [m.to_json_dict() for m in self.per_run],
            "fraction_solved_strict": self.fraction_solved_strict,
            "fraction_solved_strict_sem": self.fraction_solved_strict_sem,
            "fraction_solved_any": self.fraction_solved_any,
            "fraction_solved_any_sem": self.fraction_solved_any_sem,
            "fraction_invalid_actions": self.fraction_invalid_actions,
            "fraction_invalid_actions_sem": self.fraction_invalid_actions_sem,
            "avg_plan_steps": self.avg_plan_steps,
            "plan_steps_by_bucket": {str(k): v for k, v in self.plan_steps_by_bucket},
            "fraction_solved_by_bucket": {str(k): v for k, v in self.fraction_solved_by_bucket},
            "fraction_invalid_by_bucket": {str(k): v for k, v in self.fraction_invalid_by_bucket},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MetricsSummary":
        def buckets(name):
            return tuple(sorted((int(k), v) for k, v in doc[name].items()))
        return cls(
            task=doc["task"],
            method=doc["method"],
            label=doc["label"],
            runs=doc["runs"],
            n_problems=doc["n_problems"],
            per_run=tuple(RunMetrics.from_json_dict(m) for m in doc["per_run"]),
            fraction_solved_strict=doc["fraction_solved_strict"],
            fraction_solved_strict_sem=doc["fraction_solved_strict_sem"],
            fraction_solved_any=doc["fraction_solved_any"],
            fraction_solved_any_sem=doc["fraction_solved_any_sem"],
            fraction_invalid_actions=doc["fraction_invalid_actions"],
            fraction_invalid_actions_sem=doc["fraction_invalid_actions_sem"],
            avg_plan_steps=doc["avg_plan_steps"],
            plan_steps_by_bucket=buckets("plan_steps_by_bucket"),
            fraction_solved_by_bucket=buckets("fraction_solved_by_bucket"),
            fraction_invalid_by_bucket=buckets("fraction_invalid_by_bucket"),
        )


def _mean(values: Sequence[float]) -> float | None:
    values = [v for v in values if v is not None]
    return statistics.mean(values) if values else None


def _sem(values: Sequence[float]) -> float | None:
    if len(values) < 2:
        return None
    return statistics.stdev(values) / len(values) ** 0.5


def aggregate_run(outcomes: Sequence[Outcome], run_index: int, bucketed: bool) -> RunMetrics:
    n = len(outcomes)
    total_actions = sum(o.plan_length for o in outcomes)
    invalid_actions = sum(o.invalid_in_plan for o in outcomes)
    strict = [o for o in outcomes if o.solved_strict]
    steps_by_bucket: list[tuple[int, float]] = []
    solved_by_bucket: list[tuple[int, float]] = []
    invalid_by_bucket: list[tuple[int, float]] = []
    if bucketed:
        for bucket in sorted({o.optimal_steps for o in outcomes}):
            members = [o for o in outcomes if o.optimal_steps == bucket]
            solved = [o for o in members if o.solved_strict]
            solved_by_bucket.append((bucket, len(solved) / len(members)))
            if solved:
                steps_by_bucket.append((bucket, statistics.mean(o.plan_length for o in solved)))
            bucket_actions = sum(o.plan_length for o in members)
            bucket_invalid = sum(o.invalid_in_plan for o in members)
            invalid_by_bucket.append(
                (bucket, bucket_invalid / bucket_actions if bucket_actions else 0.0)
            )
    return RunMetrics(
        run_index=run_index,
        n_problems=n,
        fraction_solved_strict=sum(o.solved_strict for o in outcomes) / n,
        fraction_solved_any=sum(o.solved_any for o in outcomes) / n,
        fraction_invalid_actions=invalid_actions / total_actions if total_actions else 0.0,
        avg_plan_steps=statistics.mean(o.plan_length for o in strict) if strict else None,
        plan_steps_by_bucket=tuple(steps_by_bucket),
        fraction_solved_by_bucket=tuple(solved_by_bucket),
        fraction_invalid_by_bucket=tuple(invalid_by_bucket),
        n_errors=sum(1 for o in outcomes if o.error),
    )


def _mean_buckets(per_run: Sequence[RunMetrics], name: str) -> tuple[tuple[int, float], ...]:
    merged: dict[int, list[float]] = {}
    for metrics in per_run:
        for bucket, value in getattr(metrics, name):
            merged.setdefault(bucket, []).append(value)
    return tuple((bucket, statistics.mean(vals)) for bucket, vals in sorted(merged.items()))


def summarize(
    task: str, method: str, label: str, outcomes_by_run: Sequence[Sequence[Outcome]]
) -> MetricsSummary:
    bucketed = task in ("steppath", "valuepath")
    per_run = tuple(
        aggregate_run(outcomes, run_index, bucketed)
        for run_index, outcomes in enumerate(outcomes_by_run)
    )
    strict = [m.fraction_solved_strict for m in per_run]
    any_ = [m.fraction_solved_any for m in per_run]
    invalid = [m.fraction_invalid_actions for m in per_run]
    return MetricsSummary(
        task=task,
        method=method,
        label=label,
        runs=len(per_run),
        n_problems=per_run[0].n_problems if per_run else 0,
        per_run=per_run,
        fraction_solved_strict=statistics.mean(strict),
        fraction_solved_strict_sem=_sem(strict),
        fraction_solved_any=statistics.mean(any_),
        fraction_solved_any_sem=_sem(any_),
        fraction_invalid_actions=statistics.mean(invalid),
        fraction_invalid_actions_sem=_sem(invalid),
        avg_plan_steps=_mean([m.avg_plan_steps for m in per_run]),
        plan_steps_by_bucket=_mean_buckets(per_run, "plan_steps_by_bucket"),
        fraction_solved_by_bucket=_mean_buckets(per_run, "fraction_solved_by_bucket"),
        fraction_invalid_by_bucket=_mean_buckets(per_run, "fraction_invalid_by_bucket"),
    )


# -- execution ---------------------------------------------------------

BackendFactory = Callable[[ResolvedExperiment, "rooms.RoomGraph | None", int, str], ModuleBackend]


def _default_backend_factory(
    resolved: ResolvedExperiment, transport: Transport | None
) -> BackendFactory:
    if resolved.backend == "oracle":
        def make(res, graph, run_index, problem_id):
            noise = res.noise.with_seed(_derive_seed("noise", res.noise.seed, res.seed, run_index, problem_id))
            return OracleBackend(graph=graph, noise=noise)
        return make
    if transport is None:
        llm_config = LlmConfig.from_env()
    else:
        llm_config = LlmConfig(
            endpoint=os.environ.get("PFC_LLM_ENDPOINT", "stub://local"),
            model=os.environ.get("PFC_LLM_MODEL", "stub-model"),
            api_key=os.environ.get("PFC_LLM_API_KEY", "stub-key"),
        )
    client = ChatClient(llm_config, transport=transport)
    task_name = "toh" if resolved.task in ("toh3", "toh4") else resolved.task
    backends_per_run: dict[int, LlmBackend] = {}

    def make(res, graph, run_index, problem_id):
        # One backend per run so the elicited heuristic is cached run-wide.
        if run_index not in backends_per_run:
            backends_per_run[run_index] = LlmBackend(client, task_name, graph=graph)
        return backends_per_run[run_index]

    return make


def run_single_problem(
    problem: ProblemSpec,
    resolved: ResolvedExperiment,
    backend: ModuleBackend,
    run_index: int,
    graph: rooms.RoomGraph | None,
) -> RunRecord:
    if resolved.method == "pfc":
        search_config = SearchConfig(
            branches=resolved.branches,
            depth=resolved.depth,
            budget=resolved.budget,
            use_decomposer=resolved.use_decomposer,
            use_search=resolved.use_search,
            use_predictor=resolved.use_predictor,
            use_monitor=resolved.use_monitor,
            rng_seed=resolved.seed,
        )
        rng = random.Random(_derive_seed("rng", resolved.seed, run_index, problem.problem_id))
        _, record = generate_plan(
            problem.initial,
            problem.goal,
            search_config,
            backend,
            problem_id=problem.problem_id,
            rng=rng,
        )
    else:
        trace = Trace()
        error = None
        actions: list[MoveAction] = []
        try:
            actions = backend.full_solution(problem.initial, problem.goal, mode=resolved.method)
        except PfcError as exc:
            error = f"{type(exc).__name__}: {exc}"
        trace.total_proposals = len(actions)
        record = RunRecord(
            problem_id=problem.problem_id,
            events=trace.events,
            plan=Plan(tuple(actions[: resolved.budget])),
            total_proposals=trace.total_proposals,
            invalid_proposals=0,
            budget_exhausted=len(actions) > resolved.budget,
            goal_confirmed=False,
            error=error,
        )
    record.run_index = run_index
    return score_record(record, problem, graph)


def run_experiment(
    config: "ExperimentConfig | ResolvedExperiment",
    transport: Transport | None = None,
    backend_factory: BackendFactory | None = None,
) -> MetricsSummary:
    """Execute the configured experiment and return (and optionally persist) metrics."""
    resolved = config.resolved() if isinstance(config, ExperimentConfig) else config
    problems, graph = build_problem_set(resolved)
    if not problems:
        raise ConfigError("the problem set is empty")
    factory = backend_factory or _default_backend_factory(resolved, transport)
    workers = resolved.workers or min(32, os.cpu_count() or 4)
    records_by_run: list[list[RunRecord]] = []
    for run_index in range(resolved.runs):
        def solve(problem: ProblemSpec) -> RunRecord:
            backend = factory(resolved, graph, run_index, problem.problem_id)
            return run_single_problem(problem, resolved, backend, run_index, graph)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(solve, problems))
        else:
            records = [solve(problem) for problem in problems]
        records_by_run.append(records)
    summary = summarize(
        resolved.task,
        resolved.method,
        resolved.label,
        [[Outcome.from_record(r) for r in records] for records in records_by_run],
    )
    if resolved.out_dir:
        write_outputs(Path(resolved.out_dir), resolved, problems, records_by_run, summary)
    return summary


def write_outputs(
    out_dir: Path,
    resolved: ResolvedExperiment,
    problems: Sequence[ProblemSpec],
    records_by_run: Sequence[Sequence[RunRecord]],
    summary: MetricsSummary,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"task": resolved.task, "method": resolved.method, "label": resolved.label}
    for run_index, records in enumerate(records_by_run):
        run_dir = out_dir / "traces" / f"run{run_index}"
        run_dir.mkdir(parents=True, exist_ok=True)
        for record in records:
            path = run_dir / f"{record.problem_id}.jsonl"
            path.write_text(record.to_jsonl(**meta), encoding="utf-8")
    problems_dir = out_dir / "problems"
    problems_dir.mkdir(parents=True, exist_ok=True)
    (problems_dir / "problems.json").write_text(
        json.dumps(export_problems(resolved.task, problems), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    doc = {"config": resolved.config_json_dict(), "summary": summary.to_json_dict()}
    (out_dir / "summary.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def export_problems(task: str, problems: Sequence[ProblemSpec]) -> dict:
    if task in ("toh3", "toh4"):
        def lists(config: Configuration) -> dict:
            return {label: list(lst) for label, lst in zip("ABC", config.toh_lists)}
        return {
            "task": task,
            "n_disks": problems[0].initial.n_disks,
            "problems": [
                {
                    "id": p.problem_id,
                    "initial": lists(p.initial),
                    "goal": lists(p.goal.target_configuration),
                }
                for p in problems
            ],
        }
    if task == "steppath":
        return {
            "task": task,
            "problems": [
                {
                    "id": p.problem_id,
                    "start": p.initial.graph_room,
                    "target": p.goal.target_room,
                    "optimal_steps": p.optimal_steps,
                }
                for p in problems
            ],
        }
    return {
        "task": task,
        "rewards": {str(k): v for k, v in sorted(problems[0].goal.rewards.items())},
        "problems": [
            {"id": p.problem_id, "start": p.initial.graph_room, "optimal_steps": p.optimal_steps}
            for p in problems
        ],
    }


# -- trace recomputation -----------------------------------------------

_FINAL_REQUIRED = (
    "task",
    "method",
    "label",
    "problem_id",
    "run_index",
    "solved_strict",
    "solved_any",
    "invalid_in_plan",
    "plan_length",
    "optimal_steps",
)


def read_trace_outcome(path: Path) -> dict:
    """The final (scored) line of one trace file, validated."""
    final = None
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}:{line_number}: not valid JSON ({exc})")
            if isinstance(doc, dict) and doc.get("final"):
                final = (line_number, doc)
    if final is None:
        raise TraceFormatError(f"{path}: no final outcome line")
    line_number, doc = final
    missing = [key for key in _FINAL_REQUIRED if key not in doc]
    if missing:
        raise TraceFormatError(f"{path}:{line_number}: final line is missing {missing}")
    return doc


def recompute_metrics(trace_files: Iterable[Path | str]) -> MetricsSummary:
    """Rebuild the metrics summary purely from trace files of one experiment."""
    finals = [read_trace_outcome(Path(p)) for p in sorted(Path(p) for p in trace_files)]
    if not finals:
        raise TraceFormatError("no trace files supplied")
    keys = {(doc["task"], doc["method"], doc["label"]) for doc in finals}
    if len(keys) > 1:
        raise TraceFormatError(f"traces mix several experiments: {sorted(keys)}")
    task, method, label = next(iter(keys))
    by_run: dict[int, list[Outcome]] = {}
    for doc in finals:
        outcome = Outcome(
            problem_id=doc["problem_id"],
            run_index=int(doc["run_index"]),
            solved_strict=bool(doc["solved_strict"]),
            solved_any=bool(doc["solved_any"]),
            invalid_in_plan=int(doc["invalid_in_plan"]),
            plan_length=int(doc["plan_length"]),
            optimal_steps=int(doc["optimal_steps"]),
            error=doc.get("error"),
        )
        by_run.setdefault(outcome.run_index, []).append(outcome)
    outcomes_by_run = [
        sorted(by_run[r], key=lambda o: o.problem_id) for r in sorted(by_run)
    ]
    return summarize(task, method, label, outcomes_by_run)


# -- tables ------------------------------------------------------------


def format_fraction(value: float | None) -> str:
    if value is None:
        return "-"
    if value == 0:
        return "0.0"
    if value == 1:
        return "1.0"
    return f"{value:.2f}"


def format_steps(value: float | None) -> str:
    if value is None:
        return "-"
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


_LABEL_ORDER = (
    "Zero-shot",
    "ICL",
    "LLM-PFC",
    "LLM-PFC w/o Task Decomposer",
    "LLM-PFC w/o Tree Search",
    "LLM-PFC w/o Monitor",
)


def _label_sort_key(label: str) -> tuple[int, str]:
    try:
        return (_LABEL_ORDER.index(label), label)
    except ValueError:
        return (len(_LABEL_ORDER), label)


def _markdown_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join(" --- " for _ in headers) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def emit_tables(summaries: Sequence[MetricsSummary]) -> tuple[str, str]:
    """Render the collected summaries as markdown tables and flat CSV."""
    md_parts: list[str] = []

    toh_summaries = {
        (s.label, s.task): s for s in summaries if s.task in ("toh3", "toh4")
    }
    if toh_summaries:
        labels = sorted({label for label, _ in toh_summaries}, key=_label_sort_key)
        headers = [
            "Model",
            "Fraction solved (3-disk)",
            "Fraction solved (4-disk)",
            "Fraction invalid (3-disk)",
            "Fraction invalid (4-disk)",
        ]
        rows = []
        for label in labels:
            s3 = toh_summaries.get((label, "toh3"))
            s4 = toh_summaries.get((label, "toh4"))
            rows.append(
                [
                    label,
                    format_fraction(s3.fraction_solved_strict if s3 else None),
                    format_fraction(s4.fraction_solved_strict if s4 else None),
                    format_fraction(s3.fraction_invalid_actions if s3 else None),
                    format_fraction(s4.fraction_invalid_actions if s4 else None),
                ]
            )
        md_parts.append("## Tower of Hanoi\n\n" + _markdown_table(headers, rows))

    ablations = sorted(
        (s for s in summaries if s.task == "toh3" and s.method == "pfc"),
        key=lambda s: _label_sort_key(s.label),
    )
    if len(ablations) > 1:
        headers = ["Model", "Fraction solved problems", "Fraction invalid actions"]
        rows = [
            [s.label, format_fraction(s.fraction_solved_strict), format_fraction(s.fraction_invalid_actions)]
            for s in ablations
        ]
        md_parts.append("## Ablations (3-disk)\n\n" + _markdown_table(headers, rows))

    for task, title in (("valuepath", "Valuepath"), ("steppath", "Steppath")):
        task_summaries = sorted(
            (s for s in summaries if s.task == task), key=lambda s: _label_sort_key(s.label)
        )
        if not task_summaries:
            continue
        buckets = sorted({b for s in task_summaries for b, _ in s.plan_steps_by_bucket}) or sorted(
            {b for s in task_summaries for b, _ in s.fraction_solved_by_bucket}
        )
        if task == "steppath":
            headers = (
                ["Model"]
                + [f"Fraction solved ({b}-step)" for b in buckets]
                + [f"Fraction invalid ({b}-step)" for b in buckets]
                + [f"Avg plan steps ({b}-step)" for b in buckets]
            )
            rows = []
            for s in task_summaries:
                solved = dict(s.fraction_solved_by_bucket)
                invalid = dict(s.fraction_invalid_by_bucket)
                steps = dict(s.plan_steps_by_bucket)
                rows.append(
                    [s.label]
                    + [format_fraction(solved.get(b)) for b in buckets]
                    + [format_fraction(invalid.get(b)) for b in buckets]
                    + [format_steps(steps.get(b)) for b in buckets]
                )
        else:
            headers = (
                ["Model", "Fraction solved problems", "Fraction invalid actions"]
                + [f"Avg plan steps ({b}-step)" for b in buckets]
            )
            rows = []
            for s in task_summaries:
                steps = dict(s.plan_steps_by_bucket)
                rows.append(
                    [
                        s.label,
                        format_fraction(s.fraction_solved_strict),
                        format_fraction(s.fraction_invalid_actions),
                    ]
                    + [format_steps(steps.get(b)) for b in buckets]
                )
        md_parts.append(f"## {title}\n\n" + _markdown_table(headers, rows))

    markdown = "\n\n".join(md_parts) + ("\n" if md_parts else "")

    csv_headers = [
        "task",
        "label",
        "method",
        "runs",
        "n_problems",
        "fraction_solved_strict",
        "fraction_solved_strict_sem",
        "fraction_solved_any",
        "fraction_invalid_actions",
        "fraction_invalid_actions_sem",
        "avg_plan_steps",
    ]
    all_buckets = sorted({b for s in summaries for b, _ in s.plan_steps_by_bucket})
    csv_headers += [f"avg_plan_steps_{b}_step" for b in all_buckets]
    csv_headers += [f"fraction_solved_{b}_step" for b in all_buckets]
    csv_lines = [",".join(csv_headers)]
    for s in sorted(summaries, key=lambda s: (s.task, _label_sort_key(s.label))):
        steps = dict(s.plan_steps_by_bucket)
        solved = dict(s.fraction_solved_by_bucket)
        cells = [
            s.task,
            s.label,
            s.method,
            str(s.runs),
            str(s.n_problems),
            repr(s.fraction_solved_strict),
            repr(s.fraction_solved_strict_sem) if s.fraction_solved_strict_sem is not None else "",
            repr(s.fraction_solved_any),
            repr(s.fraction_invalid_actions),
            repr(s.fraction_invalid_actions_sem) if s.fraction_invalid_actions_sem is not None else "",
            repr(s.avg_plan_steps) if s.avg_plan_steps is not None else "",
        ]
        cells += [repr(steps[b]) if b in steps else "" for b in all_buckets]
        cells += [repr(solved[b]) if b in solved else "" for b in all_buckets]
        csv_lines.append(",".join(cells))
    csv_text = "\n".join(csv_lines) + "\n"
    return markdown, csv_text


def load_summaries(directory: Path | str) -> list[MetricsSummary]:
    """Collect every summary.json under a directory tree."""
    directory = Path(directory)
    summaries = []
    candidates = sorted(directory.rglob("summary.json"))
    if directory.name == "summary.json" and directory.is_file():
        candidates = [directory]
    for path in candidates:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
        summaries.append(MetricsSummary.from_json_dict(doc["summary"]))
    return summaries
