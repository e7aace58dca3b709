"""The ``pfc`` command line: run experiments, render reports, recompute metrics.

``pfc run`` executes one experiment and persists traces plus summary.json;
``pfc tables`` renders markdown/CSV tables and metric figures from summaries;
``pfc recompute`` rebuilds metrics purely from trace files; ``pfc
gen-problems`` exports problem sets as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import harness, rooms, toh
from .core import ConfigError, PfcError
from .oracle import NoiseProfile


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            raise ConfigError("TOML config files need Python >= 3.11; use JSON instead")
        return tomllib.loads(text)
    return json.loads(text)


def _experiment_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(_load_config_file(args.config))
    noise_values = values.pop("noise", {})
    for attr, key in (
        ("noise_invalid", "invalid_action_rate"),
        ("noise_bias", "evaluator_error_bias"),
        ("noise_false_accept", "monitor_false_accept_rate"),
        ("noise_seed", "seed"),
    ):
        if getattr(args, attr) is not None:
            noise_values[key] = getattr(args, attr)
    for key in (
        "task",
        "method",
        "backend",
        "branches",
        "depth",
        "budget",
        "runs",
        "seed",
        "workers",
        "graph_file",
        "steppath_count",
    ):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    for flag, key in (
        ("no_decomposer", "use_decomposer"),
        ("no_search", "use_search"),
        ("no_predictor", "use_predictor"),
        ("no_monitor", "use_monitor"),
    ):
        if getattr(args, flag):
            values[key] = False
    if args.out is not None:
        values["out_dir"] = args.out
    if "task" not in values:
        raise ConfigError("a task is required: --task or a config file with a 'task' key")
    if "excluded_problem_ids" in values and values["excluded_problem_ids"] is not None:
        values["excluded_problem_ids"] = tuple(values["excluded_problem_ids"])
    return harness.ExperimentConfig(noise=NoiseProfile(**noise_values), **values)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    summary = harness.run_experiment(config)
    print(f"{summary.task} / {summary.label} ({summary.runs} run(s), {summary.n_problems} problems)")
    print(f"  fraction solved (strict): {summary.fraction_solved_strict:.4f}"
          + (f" ± {summary.fraction_solved_strict_sem:.4f}" if summary.fraction_solved_strict_sem is not None else ""))
    print(f"  fraction solved (any):    {summary.fraction_solved_any:.4f}")
    print(f"  fraction invalid actions: {summary.fraction_invalid_actions:.4f}"
          + (f" ± {summary.fraction_invalid_actions_sem:.4f}" if summary.fraction_invalid_actions_sem is not None else ""))
    if summary.avg_plan_steps is not None:
        print(f"  avg plan steps (solved):  {summary.avg_plan_steps:.3f}")
    if config.out_dir:
        print(f"  outputs written to {config.out_dir}")
    return 0


def _cmd_tables(args: argparse.Namespace) -> int:
    source = Path(args.directory)
    summaries = harness.load_summaries(source)
    if not summaries:
        raise ConfigError(f"no summary.json found under {source}")
    markdown, csv_text = harness.emit_tables(summaries)
    out_dir = Path(args.out) if args.out else source
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tables.md").write_text(markdown, encoding="utf-8")
    (out_dir / "tables.csv").write_text(csv_text, encoding="utf-8")
    written = [out_dir / "tables.md", out_dir / "tables.csv"]
    if not args.no_figures:
        from .figures import render_figures

        written += render_figures(summaries, out_dir / "figures")
    for path in written:
        print(path)
    return 0


def _cmd_recompute(args: argparse.Namespace) -> int:
    source = Path(args.directory)
    if source.is_file():
        trace_files = [source]
    else:
        trace_files = sorted(source.rglob("*.jsonl"))
    if not trace_files:
        raise ConfigError(f"no trace files under {source}")
    groups: dict[tuple[str, str, str], list[Path]] = {}
    for path in trace_files:
        doc = harness.read_trace_outcome(path)
        groups.setdefault((doc["task"], doc["method"], doc["label"]), []).append(path)
    summaries = [harness.recompute_metrics(paths) for _, paths in sorted(groups.items())]
    markdown, _ = harness.emit_tables(summaries)
    print(markdown)
    if args.out:
        doc = [s.to_json_dict() for s in summaries]
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"recomputed metrics written to {args.out}")
    return 0


def _cmd_gen_problems(args: argparse.Namespace) -> int:
    if args.task in ("toh3", "toh4"):
        n = 3 if args.task == "toh3" else 4
        problems = toh.enumerate_problems(n)
        doc = {
            "task": args.task,
            "n_disks": n,
            "problems": [
                {
                    "id": p.problem_id,
                    "initial": {label: list(lst) for label, lst in zip("ABC", p.initial.toh_lists)},
                    "goal": {label: list(lst) for label, lst in zip("ABC", p.goal.toh_lists)},
                }
                for p in problems
            ],
        }
    else:
        graph = rooms.RoomGraph.from_file(args.graph_file) if args.graph_file else rooms.default_graph()
        if args.task == "steppath":
            if args.steps is None:
                raise ConfigError("steppath generation needs --steps")
            problems = rooms.generate_steppath(graph, args.steps, args.count, args.seed)
            doc = {
                "task": "steppath",
                "problems": [
                    {"id": p.problem_id, "start": p.start, "target": p.target, "optimal_steps": p.optimal_steps}
                    for p in problems
                ],
            }
        else:
            problems = rooms.generate_valuepath(graph)
            doc = {
                "task": "valuepath",
                "rewards": {str(k): v for k, v in sorted(graph.rewards.items())},
                "problems": [{"id": p.problem_id, "start": p.start} for p in problems],
            }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"{len(doc['problems'])} problems written to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--task", choices=harness.TASKS)
    run.add_argument("--method", choices=harness.METHODS)
    run.add_argument("--backend", choices=harness.BACKENDS)
    run.add_argument("--branches", type=int)
    run.add_argument("--depth", type=int)
    run.add_argument("--budget", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--steppath-count", type=int, dest="steppath_count")
    run.add_argument("--graph-file", dest="graph_file")
    run.add_argument("--no-decomposer", action="store_true")
    run.add_argument("--no-search", action="store_true")
    run.add_argument("--no-predictor", action="store_true")
    run.add_argument("--no-monitor", action="store_true")
    run.add_argument("--noise-invalid", type=float, dest="noise_invalid")
    run.add_argument("--noise-bias", type=int, dest="noise_bias")
    run.add_argument("--noise-false-accept", type=float, dest="noise_false_accept")
    run.add_argument("--noise-seed", type=int, dest="noise_seed")
    run.add_argument("--config", help="JSON (or TOML on 3.11+) file mirroring the flags")
    run.add_argument("--out", help="directory for traces, problems and summary.json")
    run.set_defaults(func=_cmd_run)

    tables = sub.add_parser("tables", help="render tables and figures from summaries")
    tables.add_argument("directory")
    tables.add_argument("--out")
    tables.add_argument("--no-figures", action="store_true")
    tables.set_defaults(func=_cmd_tables)

    recompute = sub.add_parser("recompute", help="recompute metrics from trace files")
    recompute.add_argument("directory")
    recompute.add_argument("--out")
    recompute.set_defaults(func=_cmd_recompute)

    gen = sub.add_parser("gen-problems", help="export a problem set as JSON")
    gen.add_argument("--task", required=True, choices=harness.TASKS)
    gen.add_argument("--steps", type=int, choices=(2, 3, 4))
    gen.add_argument("--count", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--graph-file", dest="graph_file")
    gen.add_argument("--out")
    gen.set_defaults(func=_cmd_gen_problems)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PfcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
