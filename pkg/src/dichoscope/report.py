"""Verdict records returned by every inequality check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


@dataclass
class CheckReport:
    """Pass/fail verdict of a grid check.

    ``worst_violation`` is measured on the check's own scale (relative
    excess over the bound for inequality checks) and ``passed`` holds iff
    it is at most ``tolerance``.  ``witness`` lists the worst offending
    points, typically ``(t, s, lhs, rhs)``.
    """

    name: str
    passed: bool
    worst_violation: float
    tolerance: float
    witness: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.passed)

    def to_dict(self):
        return jsonable({
            "name": self.name,
            "pass": bool(self.passed),
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "witness": self.witness,
            "details": self.details,
        })


def worst_pairs(excess, rows, k=5):
    """Indices of the ``k`` largest entries of ``excess`` paired with ``rows``."""
    excess = np.asarray(excess, dtype=float)
    if excess.size == 0:
        return []
    order = np.argsort(-excess, kind="stable")[:k]
    return [tuple(float(r[i]) for r in rows) for i in order]
