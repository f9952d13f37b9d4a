"""Shuffling-type SGD for finite sums under PL-type conditions."""

import json as _json

from ._core import (
    ConfigError,
    Constants,
    ContractError,
    DivergenceError,
    Problem,
    SchedulePlan,
    compute_constants,
    estimate_smoothness,
    fit_loglog,
    gradient_check,
    interpolating,
    least_squares,
    permutation,
    plan_schedule,
    run,
)
from ._core import load_problem as _load_problem


def load_problem(doc):
    """Build a problem from a dict or a JSON string."""
    if not isinstance(doc, str):
        doc = _json.dumps(doc)
    return _load_problem(doc)


__all__ = [
    "ConfigError",
    "Constants",
    "ContractError",
    "DivergenceError",
    "Problem",
    "SchedulePlan",
    "compute_constants",
    "estimate_smoothness",
    "fit_loglog",
    "gradient_check",
    "interpolating",
    "least_squares",
    "load_problem",
    "permutation",
    "plan_schedule",
    "run",
]
