"""Uniform bounded growth and decay: window checks, matrix form, conversions.

The window form bounds ``||Phi(t,s)||`` by ``C_T`` for ``t`` in a group
window of length T around ``s``; the matrix form bounds it by
``K0 (h-ratio)^beta`` on every pair.  Both are checked in operator norm,
which is the same as quantifying over all solutions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .growth import GrowthRate, GroupSample, inverse, log_h_grid, star, unit
from .linsys import IntegratorConfig, LinearSystem, Propagator, spectral_norms
from .report import CheckReport, jsonable, worst_pairs

log = logging.getLogger(__name__)

__all__ = [
    "GrowthBoundCertificate", "KINDS", "window_norms", "check_definition", "estimate_C_T",
    "check_matrix_bound", "def_to_matrix", "matrix_to_def", "round_trip_report",
    "sharp_beta", "alpha_leq_beta_check", "certify_growth",
]

KINDS = ("growth", "decay", "both")


@dataclass
class GrowthBoundCertificate:
    kind: str
    T: float
    C_T: float
    K0: float
    beta: float
    grid: tuple
    worst_slack: float
    verified: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        if self.C_T < 1 or self.K0 < 1 or self.beta < 0:
            raise DomainError("need C_T >= 1, K0 >= 1 and beta >= 0")

    def to_dict(self):
        return jsonable({
            "kind": self.kind, "T": self.T, "C_T": self.C_T, "K0": self.K0,
            "beta": self.beta, "worst_slack": self.worst_slack, "verified": self.verified,
            "interval": [self.grid[0], self.grid[-1]], "grid_size": len(self.grid),
        })


def _points(grid):
    return grid.array() if isinstance(grid, GroupSample) else np.asarray(grid, dtype=float)


def _check_kind(kind):
    if kind not in KINDS:
        raise DomainError(f"kind must be one of {KINDS}, got {kind!r}")


def def_to_matrix(g: GrowthRate, T: float, C_T: float):
    """``(K0, beta) = (C_T, ln C_T / ln h(T))``."""
    hT = float(g.hv(T))
    if not hT > 1:
        raise DomainError(f"need h(T) > 1, got {hT}")
    if C_T < 1:
        raise DomainError("C_T must be >= 1")
    return float(C_T), math.log(C_T) / math.log(hT)


def matrix_to_def(g: GrowthRate, K0: float, beta: float, T: float) -> float:
    """``C_T = K0 h(T)^beta``; raises OverflowError if that is not representable."""
    hT = float(g.hv(T))
    if not hT > 1:
        raise DomainError(f"need h(T) > 1, got {hT}")
    try:
        out = K0 * math.pow(hT, beta)
    except OverflowError:
        out = math.inf
    if math.isinf(out):
        raise OverflowError(f"K0 h(T)^beta overflows (ln = {math.log(K0) + beta * math.log(hT):.4g})")
    return out


def round_trip_report(g: GrowthRate, T: float, C_T: float) -> dict:
    """Window constant -> matrix form -> window constant.

    The second leg returns ``C_T^2``, not ``C_T``: each direction of the
    equivalence spends one factor of the constant.  The report states the
    inflation explicitly.
    """
    K0, beta = def_to_matrix(g, T, C_T)
    back = matrix_to_def(g, K0, beta, T)
    return {
        "T": T, "C_T": C_T, "K0": K0, "beta": beta, "C_T_round_trip": back,
        "inflation": back / C_T, "identity": math.isclose(back, C_T, rel_tol=1e-12),
        "note": "round trip is not the identity: C_T becomes C_T^2",
    }


def window_norms(sys: LinearSystem, g: GrowthRate, kind: str, T: float, grid,
                 cfg: IntegratorConfig = IntegratorConfig(), window_points: int = 16):
    """``||Phi(t,s)||`` for every grid ``s`` and sampled ``t`` in its window.

    Returns ``(s, t, norms, skipped)``; windows leaving the system's domain
    are skipped and counted.
    """
    _check_kind(kind)
    if not T > unit(g):
        raise DomainError("window length T must exceed the group unit")
    if window_points < 2:
        raise DomainError("window_points must be >= 2")
    s_pts = _points(grid)
    windows = []
    skipped = 0
    for s in s_pts:
        ts = []
        if kind in ("growth", "both"):
            ts.append(log_h_grid(g, s, float(star(g, s, T)), window_points).array())
        if kind in ("decay", "both"):
            lo = float(star(g, s, inverse(g, T)))
            if not lo > sys.lo:
                skipped += 1
                continue
            ts.append(log_h_grid(g, lo, s, window_points).array())
        hi = max(float(x[-1]) for x in ts)
        if hi > sys.hi:
            skipped += 1
            continue
        windows.append((float(s), np.unique(np.concatenate(ts))))
    if not windows:
        raise DomainError("every window leaves the system domain")
    times = np.unique(np.concatenate([w[1] for w in windows] + [[w[0] for w in windows]]))
    prop = Propagator(sys, times, cfg)
    S, Tt, mats = [], [], []
    for s, ts in windows:
        j = prop.idx(s)
        for t in ts:
            S.append(s)
            Tt.append(float(t))
            mats.append(prop.phi_index(prop.idx(t), j))
    return np.asarray(S), np.asarray(Tt), spectral_norms(np.stack(mats)), skipped


def check_definition(sys, g, kind, T, C_T, grid, cfg=IntegratorConfig(), tol=1e-9,
                     window_points: int = 16) -> CheckReport:
    """``||Phi(t,s)|| <= C_T (1 + tol)`` on the sampled windows."""
    s, t, norms, skipped = window_norms(sys, g, kind, T, grid, cfg, window_points)
    excess = norms / C_T - 1.0
    worst = float(excess.max())
    wit = worst_pairs(excess, [t, s, norms, np.full_like(norms, C_T)]) if worst > tol else []
    return CheckReport(f"check_definition[{kind}]", worst <= tol, worst, tol, wit,
                       {"T": T, "C_T": C_T, "pairs": int(norms.size), "windows_skipped": skipped,
                        "max_norm": float(norms.max())})


def estimate_C_T(sys, g, kind, T, grid, cfg=IntegratorConfig(), window_points: int = 16) -> float:
    """Smallest window constant consistent with the grid (clamped to >= 1)."""
    _, _, norms, _ = window_norms(sys, g, kind, T, grid, cfg, window_points)
    return max(1.0, float(norms.max()))


def _pair_terms(sys, g, kind, grid, cfg):
    pts = _points(grid)
    prop = Propagator(sys, pts, cfg)
    table = prop.pair_table(pts)
    lh = np.log(np.asarray(g.hv(pts), dtype=float))
    ii, jj = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")
    if kind == "growth":
        mask = ii >= jj
    elif kind == "decay":
        mask = ii <= jj
    else:
        mask = np.ones_like(ii, dtype=bool)
    ti, si = ii[mask], jj[mask]
    norms = spectral_norms(table[ti, si])
    return pts[ti], pts[si], norms, np.abs(lh[ti] - lh[si])


def check_matrix_bound(sys, g, kind, K0, beta, grid, cfg=IntegratorConfig(), tol=1e-9) -> CheckReport:
    """``||Phi(t,s)|| <= K0 (h-ratio)^beta`` on ordered grid pairs.

    ``growth`` uses pairs with t >= s, ``decay`` pairs with s >= t, and
    ``both`` every pair with the group absolute value of the ratio.
    """
    _check_kind(kind)
    if K0 < 1 or beta < 0:
        raise DomainError("need K0 >= 1 and beta >= 0")
    t, s, norms, logr = _pair_terms(sys, g, kind, grid, cfg)
    log_rhs = math.log(K0) + beta * logr
    excess = np.exp(np.log(np.maximum(norms, 1e-300)) - log_rhs) - 1.0
    worst = float(excess.max())
    wit = worst_pairs(excess, [t, s, norms, np.exp(log_rhs)]) if worst > tol else []
    return CheckReport(f"check_matrix_bound[{kind}]", worst <= tol, worst, tol, wit,
                       {"K0": K0, "beta": beta, "pairs": int(norms.size),
                        "worst_slack": float(np.min(np.exp(log_rhs) - norms))})


def sharp_beta(sys, g, grid, cfg=IntegratorConfig(), kind: str = "both", delta: float = 0.05) -> float:
    """``max ln||Phi(t,s)|| / ln(h-ratio)`` over pairs with ratio >= 1 + delta."""
    _check_kind(kind)
    _, _, norms, logr = _pair_terms(sys, g, kind, grid, cfg)
    sel = logr >= math.log1p(delta)
    if not sel.any():
        raise DomainError("no grid pair is far enough apart to estimate an exponent")
    return float(max(0.0, np.max(np.log(norms[sel]) / logr[sel])))


def certify_growth(sys, g, kind, T, grid, cfg=IntegratorConfig(), tol=1e-9, window_points=16):
    """Measure ``C_T``, convert, and verify the matrix form on the grid.

    Returns ``(certificate, definition_report, matrix_report)``.
    """
    C_T = estimate_C_T(sys, g, kind, T, grid, cfg, window_points)
    K0, beta = def_to_matrix(g, T, C_T)
    rep_def = check_definition(sys, g, kind, T, C_T, grid, cfg, tol, window_points)
    rep_mat = check_matrix_bound(sys, g, kind, K0, beta, grid, cfg, tol)
    pts = _points(grid)
    cert = GrowthBoundCertificate(kind, float(T), C_T, K0, beta, tuple(pts.tolist()),
                                  rep_mat.details["worst_slack"], rep_def.passed and rep_mat.passed)
    return cert, rep_def, rep_mat


def alpha_leq_beta_check(dich, gb, tol: float = 1e-3) -> CheckReport:
    """Decay exponent of a dichotomy cannot exceed the growth exponent.

    Accepts certificates or bare numbers for either argument.
    """
    alpha = float(getattr(dich, "alpha", dich))
    beta = float(getattr(gb, "beta", gb))
    details = {"alpha": alpha, "beta": beta}
    lo_d = getattr(dich, "interval", None)
    grid_b = getattr(gb, "grid", None)
    if lo_d is not None and grid_b is not None:
        overlap = min(lo_d[1], grid_b[-1]) >= max(lo_d[0], grid_b[0])
        details["intervals_overlap"] = bool(overlap)
        if not overlap:
            log.warning("alpha/beta certificates cover disjoint intervals")
    worst = alpha - beta
    return CheckReport("alpha_leq_beta", worst <= tol, worst, tol,
                       [] if worst <= tol else [(alpha, beta)], details)
