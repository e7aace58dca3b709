"""Modular planning framework: six coordinated planner roles over swappable backends.

A deterministic oracle backend and a chat-completion backend both satisfy the
same six-role contract (decompose, propose, assess, predict, evaluate, check);
the orchestrator runs the action-proposal loop, bounded tree search and
subgoal-sequenced plan generation over either. The harness benchmarks them on
Tower of Hanoi and room-graph traversal and scores every plan on the
ground-truth simulator.
"""

from .core import (
    BackendError,
    ConfigError,
    Configuration,
    EmptyProposal,
    Feedback,
    Goal,
    GoalKind,
    IllegalMove,
    InvariantError,
    ModuleBackend,
    MoveAction,
    ParseError,
    PfcError,
    Plan,
    SearchConfig,
    TaskKind,
    Value,
    Verdict,
    parse_actions,
    parse_configuration,
    render_configuration,
)
from .oracle import NoiseProfile, OracleBackend
from .orchestrator import RunRecord, SearchCache, Trace, generate_plan, propose_actions, search

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ConfigError",
    "Configuration",
    "EmptyProposal",
    "Feedback",
    "Goal",
    "GoalKind",
    "IllegalMove",
    "InvariantError",
    "ModuleBackend",
    "MoveAction",
    "NoiseProfile",
    "OracleBackend",
    "ParseError",
    "PfcError",
    "Plan",
    "RunRecord",
    "SearchCache",
    "SearchConfig",
    "TaskKind",
    "Trace",
    "Value",
    "Verdict",
    "generate_plan",
    "parse_actions",
    "parse_configuration",
    "propose_actions",
    "render_configuration",
    "search",
    "__version__",
]
