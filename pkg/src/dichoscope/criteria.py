"""Noncriticality, expansiveness, and the constant pipelines linking them to
dichotomies.

Solutions are sampled as ``x(t) = Phi(t, t0) xi`` for a fixed reference
time ``t0`` (the group unit when it lies in the system's domain) and unit
vectors ``xi``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .dichotomy import DichotomyCertificate
from .errors import DomainError
from .growth import GrowthRate, GroupSample, ball, log_h_grid, unit
from .linsys import IntegratorConfig, LinearSystem, Propagator, sample_directions, transition
from .report import CheckReport, jsonable, worst_pairs

log = logging.getLogger(__name__)

__all__ = [
    "NoncriticalityCertificate", "ExpansivenessCertificate", "Classification",
    "check_noncritical", "noncritical_ratios", "estimate_theta", "theta_curve",
    "check_expansive", "psi", "psi_zero", "pipeline_dich_to_expansive",
    "pipeline_expansive_to_noncritical", "pipeline_noncritical_to_dich",
    "classify_solutions", "first_crossing", "subspace_angle", "expansive_failure_ratio",
]

BALL_POINTS = 64


@dataclass
class NoncriticalityCertificate:
    T: float
    theta: float
    solution_sample: list
    grid: tuple
    worst_ratio: float
    verified: bool = False

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise DomainError("theta must lie in (0,1)")

    def to_dict(self):
        return jsonable({"kind": "noncritical", "T": self.T, "theta": self.theta,
                         "solutions": len(self.solution_sample), "worst_ratio": self.worst_ratio,
                         "verified": self.verified, "interval": [self.grid[0], self.grid[-1]]})


@dataclass
class ExpansivenessCertificate:
    L: float
    beta: float
    interval_sample: list = field(default_factory=list)
    grid: tuple = ()
    worst_slack: float = math.nan
    verified: bool = False

    def __post_init__(self):
        if not (self.L > 0 and self.beta > 0):
            raise DomainError("expansiveness constants must be positive")

    def to_dict(self):
        return jsonable({"kind": "expansive", "L": self.L, "beta": self.beta,
                         "intervals": len(self.interval_sample), "worst_slack": self.worst_slack,
                         "verified": self.verified})


def _points(grid):
    return grid.array() if isinstance(grid, GroupSample) else np.asarray(grid, dtype=float)


def _reference_time(sys, g, pts):
    e = unit(g)
    return e if sys.lo < e < sys.hi else float(pts[0])


def _solutions(sys, solutions, seed):
    if solutions is None:
        return sample_directions(sys.n, 20, seed)
    xs = np.atleast_2d(np.asarray(solutions, dtype=float))
    if xs.shape[1] != sys.n:
        raise DomainError(f"solutions must have {sys.n} components")
    return xs / np.linalg.norm(xs, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# noncriticality

@dataclass
class _RatioTable:
    t: np.ndarray          # grid times >= T
    ratio: np.ndarray      # (len(t), n_solutions): |x(t)| / sup over ball
    argsup: np.ndarray     # time where the sup was attained
    clipped: int
    skipped: int
    ball_points: int


def noncritical_ratios(sys, g, T, solutions, grid, cfg=IntegratorConfig(), ball_points=BALL_POINTS,
                       t0=None, seed=0) -> _RatioTable:
    """``|x(t)| / sup_{ball(t,T)} |x(u)|`` for every grid ``t >= T`` and solution.

    Balls are sampled at ``ball_points`` log-h-uniform points (plus ``t``).
    A ball reaching below the group unit is clipped there and counted.
    """
    if not T > unit(g):
        raise DomainError("T must exceed the group unit")
    if ball_points < 2:
        raise DomainError("ball_points must be >= 2")
    pts = _points(grid)
    xs = _solutions(sys, solutions, seed)
    ts = pts[pts >= T]
    skipped = int(pts.size - ts.size)
    if ts.size == 0:
        raise DomainError("no grid point lies at or beyond T")
    e = unit(g)
    subgrids, clipped = [], 0
    for t in ts:
        lo, hi = (float(v) for v in ball(g, t, T))
        if lo < e:
            lo, clipped = e, clipped + 1
        if not (lo > sys.lo and hi < sys.hi):
            raise DomainError(f"ball({t}, T) = [{lo}, {hi}] leaves the system domain")
        sub = log_h_grid(g, lo, hi, ball_points).array()
        subgrids.append(np.union1d(sub, [t]))
    ref = _reference_time(sys, g, pts) if t0 is None else float(t0)
    times = np.unique(np.concatenate(subgrids + [[ref]]))
    prop = Propagator(sys, times, cfg)
    X = prop.from_anchor(prop.idx(ref))
    norms = np.linalg.norm(np.einsum("kij,vj->kvi", X, xs), axis=-1)  # (times, solutions)
    ratio = np.empty((ts.size, xs.shape[0]))
    argsup = np.empty_like(ratio)
    for k, (t, sub) in enumerate(zip(ts, subgrids)):
        rows = np.searchsorted(times, sub)
        block = norms[rows]
        best = np.argmax(block, axis=0)
        sup = block[best, np.arange(xs.shape[0])]
        ratio[k] = norms[prop.idx(t)] / sup
        argsup[k] = sub[best]
    return _RatioTable(ts, ratio, argsup, clipped, skipped, ball_points)


def check_noncritical(sys, g, T, theta, solutions, grid, cfg=IntegratorConfig(), tol=1e-9,
                      ball_points=BALL_POINTS, t0=None, seed=0):
    """``|x(t)| <= theta * sup_{ball(t,T)} |x(u)| * (1 + tol)`` for sampled solutions.

    Returns ``(report, certificate)``.
    """
    if not 0 < theta < 1:
        raise DomainError("theta must lie in (0,1)")
    tab = noncritical_ratios(sys, g, T, solutions, grid, cfg, ball_points, t0, seed)
    excess = tab.ratio / theta - 1.0
    worst = float(excess.max())
    col = excess.argmax(axis=1)  # worst solution at each t
    r = np.arange(len(tab.t))
    wit = worst_pairs(excess[r, col], [tab.t, tab.argsup[r, col], tab.ratio[r, col],
                                       np.full(len(r), theta)]) if worst > tol else []
    rep = CheckReport("check_noncritical", worst <= tol, worst, tol, wit,
                      {"T": T, "theta": theta, "worst_ratio": float(tab.ratio.max()),
                       "ball_points": tab.ball_points, "balls_clipped_at_unit": tab.clipped,
                       "grid_points_below_T": tab.skipped, "solutions": int(tab.ratio.shape[1]),
                       "witness_columns": ["t", "u_sup", "ratio", "theta"]})
    xs = _solutions(sys, solutions, seed)
    cert = NoncriticalityCertificate(float(T), float(theta), xs.tolist(), tuple(_points(grid).tolist()),
                                     float(tab.ratio.max()), rep.passed)
    return rep, cert


def estimate_theta(sys, g, T, solutions, grid, cfg=IntegratorConfig(), ball_points=BALL_POINTS,
                   t0=None, seed=0) -> float:
    """Sharp grid value of the noncriticality ratio at window length ``T``."""
    return float(noncritical_ratios(sys, g, T, solutions, grid, cfg, ball_points, t0, seed).ratio.max())


def theta_curve(sys, g, T_values, solutions, grid, cfg=IntegratorConfig(), ball_points=BALL_POINTS,
                t0=None, seed=0):
    """``[(T, theta(T))]`` over the given window lengths."""
    return [(float(T), estimate_theta(sys, g, T, solutions, grid, cfg, ball_points, t0, seed))
            for T in T_values]


# --------------------------------------------------------------------------
# expansiveness

def expansive_failure_ratio(L: float, beta: float) -> float:
    """h-ratio ``h(b)/h(a)`` beyond which a nonzero constant solution violates
    expansiveness at the h-midpoint of ``[a, b]``: ``(2L)^(2/beta)``."""
    return (2.0 * L) ** (2.0 / beta)


def check_expansive(sys, g, L, beta, intervals, grid, cfg=IntegratorConfig(), tol=1e-9,
                    solutions=None, t0=None, seed=0):
    """Endpoint-weighted bound on ``|x(t)|`` for ``t`` in each interval.

    ``intervals=None`` uses every pair ``a < b`` of grid points, with ``t``
    running over the grid points between them.  Explicit intervals are
    sampled at their endpoints plus the grid points they contain.
    Returns ``(report, certificate)``.
    """
    if not (L > 0 and beta > 0):
        raise DomainError("L and beta must be positive")
    pts = _points(grid)
    xs = _solutions(sys, solutions, seed)
    if intervals is None:
        intervals = [(float(pts[i]), float(pts[j])) for i in range(len(pts)) for j in range(i + 1, len(pts))]
    intervals = [(float(a), float(b)) for a, b in intervals]
    for a, b in intervals:
        if not a < b:
            raise DomainError(f"interval [{a}, {b}] is empty")
        sys.check_time(a)
        sys.check_time(b)
    ref = _reference_time(sys, g, pts) if t0 is None else float(t0)
    times = np.unique(np.concatenate([pts, np.ravel(intervals), [ref]]))
    prop = Propagator(sys, times, cfg)
    X = prop.from_anchor(prop.idx(ref))
    norms = np.linalg.norm(np.einsum("kij,vj->kvi", X, xs), axis=-1)
    lh = np.log(np.asarray(g.hv(times), dtype=float))
    ia, ib, it = [], [], []
    for a, b in intervals:
        i, j = prop.idx(a), prop.idx(b)
        inner = np.arange(i, j + 1)
        ia.append(np.full(inner.size, i))
        ib.append(np.full(inner.size, j))
        it.append(inner)
    ia, ib, it = (np.concatenate(v) for v in (ia, ib, it))
    wa = np.exp(-beta * (lh[it] - lh[ia]))[:, None]
    wb = np.exp(-beta * (lh[ib] - lh[it]))[:, None]
    rhs = L * (wa * norms[ia] + wb * norms[ib])
    lhs = norms[it]
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(rhs > 0, lhs / rhs - 1.0, np.where(lhs > 0, np.inf, -1.0))
    per_row = excess.max(axis=1)
    worst = float(per_row.max())
    col = excess.argmax(axis=1)
    r = np.arange(len(it))
    wit = worst_pairs(per_row, [times[ia], times[ib], times[it], lhs[r, col], rhs[r, col]]) if worst > tol else []
    rep = CheckReport("check_expansive", worst <= tol, worst, tol, wit,
                      {"L": L, "beta": beta, "intervals": len(intervals), "evaluations": int(excess.size),
                       "witness_columns": ["a", "b", "t", "lhs", "rhs"]})
    cert = ExpansivenessCertificate(float(L), float(beta), intervals[:50], tuple(pts.tolist()),
                                    float(np.min(rhs - lhs)), rep.passed)
    return rep, cert


# --------------------------------------------------------------------------
# the auxiliary function and the constant pipelines

def psi(g: GrowthRate, u, K: float, alpha: float):
    """``h(u)^alpha / K - K h(u)^-alpha``; strictly increasing in u."""
    if K < 1 or not alpha > 0:
        raise DomainError("need K >= 1 and alpha > 0")
    hu = np.asarray(g.hv(u), dtype=float)
    out = hu ** alpha / K - K * hu ** (-alpha)
    return float(out) if out.ndim == 0 else out


def psi_zero(g: GrowthRate, K: float, alpha: float) -> float:
    """The unique zero ``h^{-1}(K^{1/alpha})``."""
    if K < 1 or not alpha > 0:
        raise DomainError("need K >= 1 and alpha > 0")
    return float(g.back(K ** (1.0 / alpha)))


def pipeline_dich_to_expansive(cert: DichotomyCertificate) -> ExpansivenessCertificate:
    """A dichotomy with ``(K, alpha)`` is expansive with ``L = K``, ``beta = alpha``.

    The returned certificate is unverified; run :func:`check_expansive`.
    """
    if not cert.verified:
        log.warning("deriving expansiveness constants from an unverified dichotomy certificate")
    return ExpansivenessCertificate(cert.K, cert.alpha, [], cert.grid)


def pipeline_expansive_to_noncritical(g: GrowthRate, L: float, beta: float, theta_target: float):
    """Window length ``T`` at which ``2 L h(T)^-beta`` equals ``theta_target``.

    Returns ``(T, theta_target)``; ``h(T) = (2L/theta)^(1/beta) > 1``.
    """
    if not 0 < theta_target < 1:
        raise DomainError("theta must lie in (0,1)")
    if not (L > 0 and beta > 0):
        raise DomainError("L and beta must be positive")
    log_hT = math.log(2.0 * L / theta_target) / beta
    T = float(g.back(math.exp(log_hT)))
    return T, float(theta_target)


def pipeline_noncritical_to_dich(g: GrowthRate, T: float, theta: float, C_T: float):
    """``(K, alpha) = (C_T / theta, -ln(theta) / ln h(T))``."""
    if not 0 < theta < 1:
        raise DomainError("theta must lie in (0,1)")
    if C_T < 1:
        raise DomainError("C_T must be >= 1")
    hT = float(g.hv(T))
    if not hT > 1:
        raise DomainError(f"need h(T) > 1, got {hT}")
    alpha = -math.log(theta) / math.log(hT)
    if alpha < 1e-3:
        log.warning("theta = %.6g is close to 1; the derived exponent %.3g is nearly degenerate", theta, alpha)
    return C_T / theta, alpha


# --------------------------------------------------------------------------
# bounded and unbounded directions

@dataclass
class Classification:
    bounded: np.ndarray       # orthonormal columns spanning the bounded-direction estimate
    unbounded: np.ndarray     # orthonormal columns spanning its complement
    singular_values: np.ndarray
    horizon: float
    threshold: float
    sample_growth: np.ndarray
    sample_bounded: np.ndarray
    first_crossing: Optional[float] = None
    first_crossing_level: Optional[float] = None

    def to_dict(self):
        return jsonable({
            "bounded_basis": self.bounded, "unbounded_basis": self.unbounded,
            "singular_values": self.singular_values, "horizon": self.horizon,
            "threshold": self.threshold, "sample_bounded": self.sample_bounded,
            "first_crossing_estimate": self.first_crossing,
            "first_crossing_level": self.first_crossing_level,
        })


def default_horizon(g: GrowthRate) -> float:
    return float(g.back(min(1e4, g.h_max)))


def classify_solutions(sys, g, horizon=None, threshold=10.0, sample=None, cfg=IntegratorConfig(),
                       seed=0, level=None, crossing_points=200) -> Classification:
    """Split R^n by the finite-horizon growth of ``Phi(horizon, unit)``.

    Right singular vectors whose singular value is at most ``threshold``
    span the bounded-direction estimate.  With ``level`` given, the latest
    first time any sampled unbounded direction reaches that growth factor is
    reported as an empirical estimate (it is not a proven bound).
    """
    e = unit(g)
    horizon = default_horizon(g) if horizon is None else float(horizon)
    if not horizon > e:
        raise DomainError("horizon must exceed the group unit")
    M = transition(sys, horizon, e, cfg).M
    _, S, Vt = np.linalg.svd(M)
    bounded = S <= threshold
    V = Vt.T
    xs = _solutions(sys, sample, seed)
    growth = np.linalg.norm(xs @ M.T, axis=1)
    cls = Classification(V[:, bounded], V[:, ~bounded], S, horizon, threshold, growth, growth <= threshold)
    if level is not None and (~cls.sample_bounded).any():
        cls.first_crossing = first_crossing(sys, g, xs[~cls.sample_bounded], level, horizon, cfg,
                                            crossing_points)
        cls.first_crossing_level = float(level)
    return cls


def first_crossing(sys, g, directions, level, horizon, cfg=IntegratorConfig(), points=200):
    """Latest first grid time at which ``|Phi(t, unit) xi| >= level`` over the
    given directions; ``inf`` if some direction never gets there."""
    grid = log_h_grid(g, unit(g), horizon, points).array()
    prop = Propagator(sys, grid, cfg)
    X = prop.from_anchor(0)
    xs = np.atleast_2d(np.asarray(directions, dtype=float))
    xs = xs / np.linalg.norm(xs, axis=1, keepdims=True)
    norms = np.linalg.norm(np.einsum("kij,vj->kvi", X, xs), axis=-1)
    reached = norms >= level
    latest = -math.inf
    for v in range(xs.shape[0]):
        hit = np.nonzero(reached[:, v])[0]
        if hit.size == 0:
            return math.inf
        latest = max(latest, float(grid[hit[0]]))
    return latest


def subspace_angle(A, B) -> float:
    """Largest principal angle (radians) between the column spans of A and B."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if A.shape[1] == 0 and B.shape[1] == 0:
        return 0.0
    if A.shape[1] == 0 or B.shape[1] == 0:
        return math.pi / 2
    return float(np.max(subspace_angles(A, B)))
