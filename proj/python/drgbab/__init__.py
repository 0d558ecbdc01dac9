"""Python front end for the drgbab verifier core."""

import json

from ._core import (
    AttackResult,
    ExactMinimum,
    InputError,
    OracleBudgetExceeded,
    Task,
    directional_gap,
    exact_min_margin,
    generate_suite,
    grid_attack,
    heuristics,
    relu_relaxation,
)
from ._core import verify_json as _verify_json

__all__ = [
    "AttackResult",
    "ExactMinimum",
    "InputError",
    "OracleBudgetExceeded",
    "Task",
    "directional_gap",
    "exact_min_margin",
    "generate_suite",
    "grid_attack",
    "heuristics",
    "load_task",
    "relu_relaxation",
    "verify",
]


def load_task(model_path, spec_path):
    return Task.load(str(model_path), str(spec_path))


def verify(task, **config):
    """Run branch and bound. Keyword arguments use the config-file keys
    (heuristic, timeout_seconds, max_branches, batch, ...). Returns the
    result document as a dict with at least verdict, branches, splits and time_s."""
    return json.loads(_verify_json(task, json.dumps(config) if config else ""))
