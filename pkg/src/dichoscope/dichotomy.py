"""Projector families and uniform h-dichotomy checks.

A dichotomy with constants ``(K, alpha)`` bounds the projected transition
blocks by ``K (h(t)/h(s))^{-alpha}`` (stable block, t >= s) and
``K (h(s)/h(t))^{-alpha}`` (unstable block, s >= t).  Ratios are handled
through ``ln h`` so bounds spanning many decades stay representable, and
verification uses multiplicative slack: ``lhs <= rhs * (1 + tol)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, IntegrationError
from .growth import GrowthRate, GroupSample, log_h_grid, unit
from .linsys import (IntegratorConfig, LinearSystem, Propagator, sample_directions, spectral_norm,
                     spectral_norms)
from .report import CheckReport, jsonable, worst_pairs

log = logging.getLogger(__name__)

__all__ = [
    "ProjectorFamily", "DichotomyCertificate", "ConstantsCurve", "constant_projector",
    "explicit_projector", "projector_at", "conjugate", "invariance_residual", "verify_h_dichotomy",
    "verify_constant_projector", "estimate_constants", "sharp_alpha", "split_solution",
    "projector_bound", "elc_reconstruct", "elc_bound_from_growth", "check_elc",
    "extend_from_subinterval", "dichotomy_terms",
]


@dataclass(frozen=True)
class ProjectorFamily:
    """Either a constant projector ``P`` anchored at ``t0`` (so that
    ``P(t) = Phi(t,t0) P Phi(t0,t)``) or an explicit map ``t -> P(t)``."""

    kind: str
    P: Optional[np.ndarray] = None
    anchor: Optional[float] = None
    func: Optional[Callable[[float], np.ndarray]] = None
    description: str = ""

    @property
    def n(self):
        if self.P is not None:
            return self.P.shape[0]
        return np.asarray(self.func(self.anchor if self.anchor is not None else 1.0)).shape[0]

    def to_dict(self):
        out = {"kind": self.kind, "description": self.description}
        if self.P is not None:
            out["P"] = self.P.tolist()
            out["anchor"] = self.anchor
        return out


def constant_projector(P, t0: float, description: str = "") -> ProjectorFamily:
    P = np.array(P, dtype=float)
    _check_idempotent(P, 1e-9, "constant projector")
    return ProjectorFamily("constant", P=P, anchor=float(t0),
                           description=description or f"constant P={P.tolist()} at t0={t0}")


def explicit_projector(func, description: str = "explicit P(t)", probe=None,
                       tol: float = 1e-9) -> ProjectorFamily:
    fam = ProjectorFamily("explicit", func=func, description=description)
    if probe is not None:
        ranks = set()
        for t in probe:
            Pt = np.asarray(func(float(t)), dtype=float)
            _check_idempotent(Pt, tol, f"P({t})")
            ranks.add(int(round(np.trace(Pt))))
        if len(ranks) > 1:
            raise DomainError(f"projector rank varies across probe points: {sorted(ranks)}")
    return fam


def _check_idempotent(P, tol, label):
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DomainError(f"{label} must be a square matrix")
    resid = spectral_norm(P @ P - P) / max(1.0, spectral_norm(P))
    if resid > tol:
        raise DomainError(f"{label} is not idempotent (||P^2 - P|| = {resid:.3g})")


def projector_at(P, t0: float, fm, t: float) -> np.ndarray:
    """``Phi(t) P Phi(t)^{-1}`` for the fundamental matrix normalised at ``t0``.

    ``fm`` is either a :class:`LinearSystem` (integrated from ``t0``), a
    callable ``t -> Phi(t)``, or an already evaluated matrix ``Phi(t)``.
    """
    P = np.asarray(P, dtype=float)
    if isinstance(fm, LinearSystem):
        from .linsys import transition
        phi_t = transition(fm, t, t0).M
    elif callable(fm):
        phi_t = np.asarray(fm(t), dtype=float)
    else:
        phi_t = np.asarray(fm, dtype=float)
    return conjugate(P, phi_t)


def conjugate(P, phi_t) -> np.ndarray:
    """``phi_t P phi_t^{-1}``; a singular ``phi_t`` is an integrator failure."""
    phi_t = np.asarray(phi_t, dtype=float)
    try:
        out = np.linalg.solve(phi_t.T, (phi_t @ np.asarray(P, dtype=float)).T).T
    except np.linalg.LinAlgError as exc:
        raise IntegrationError("fundamental matrix is numerically singular") from exc
    if not np.all(np.isfinite(out)):
        raise IntegrationError("fundamental matrix is numerically singular")
    return out


@dataclass
class DichotomyCertificate:
    K: float
    alpha: float
    interval: tuple
    projector: ProjectorFamily
    grid: tuple
    worst_slack: float
    verified: bool = False
    tolerance: float = 0.0
    below_unit: int = 0

    def to_dict(self):
        return jsonable({
            "kind": "dichotomy",
            "K": self.K, "alpha": self.alpha,
            "interval": list(self.interval),
            "grid": {"size": len(self.grid), "lo": self.grid[0], "hi": self.grid[-1]},
            "worst_slack": self.worst_slack,
            "verified": self.verified,
            "tolerance": self.tolerance,
            "points_below_unit": self.below_unit,
            "projector": self.projector.to_dict(),
        })


# --------------------------------------------------------------------------
# grid evaluation

def _grid_setup(sys, proj, pts, cfg, extra=()):
    times = list(pts) + list(extra)
    if proj.kind == "constant":
        times.append(proj.anchor)
    prop = Propagator(sys, times, cfg)
    table = prop.pair_table(pts)
    Ps = _projectors(prop, proj, pts)
    return prop, table, Ps


def _projectors(prop, proj, pts):
    n = prop.sys.n
    out = np.empty((len(pts), n, n))
    if proj.kind == "constant":
        a = prop.idx(proj.anchor)
        for k, t in enumerate(pts):
            i = prop.idx(t)
            out[k] = prop.phi_index(i, a) @ proj.P @ prop.phi_index(a, i)
    else:
        for k, t in enumerate(pts):
            out[k] = np.asarray(proj.func(float(t)), dtype=float)
    return out


@dataclass
class DichotomyTerms:
    """Projected block norms on every ordered grid pair.

    ``block`` is ``"P"`` for pairs with t >= s (stable block) and ``"Q"`` for
    s >= t (unstable block); ``logr >= 0`` is the log h-distance of the pair.
    """

    t: np.ndarray
    s: np.ndarray
    lhs: np.ndarray
    logr: np.ndarray
    block: np.ndarray


def dichotomy_terms(sys, g, proj, grid, cfg=IntegratorConfig()) -> DichotomyTerms:
    pts = _as_points(grid)
    _, table, Ps = _grid_setup(sys, proj, pts, cfg)
    n = sys.n
    I = np.eye(n)
    lh = np.log(np.asarray(g.hv(pts), dtype=float))
    ii, jj = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")  # t=ii, s=jj
    mask_p = ii >= jj
    mask_q = ii <= jj
    ti, si = ii[mask_p], jj[mask_p]
    lhs_p = spectral_norms(table[ti, si] @ Ps[si])
    tq, sq = ii[mask_q], jj[mask_q]
    lhs_q = spectral_norms(table[tq, sq] @ (I - Ps[sq]))
    return DichotomyTerms(
        t=np.concatenate([pts[ti], pts[tq]]),
        s=np.concatenate([pts[si], pts[sq]]),
        lhs=np.concatenate([lhs_p, lhs_q]),
        logr=np.concatenate([lh[ti] - lh[si], lh[sq] - lh[tq]]),
        block=np.array(["P"] * len(ti) + ["Q"] * len(tq)),
    )


def _count_below_unit(g, pts):
    e = unit(g)
    return int(np.sum(pts < e - 1e-12 * max(1.0, abs(e))))


def _as_points(grid):
    if isinstance(grid, GroupSample):
        return grid.array()
    return np.asarray(grid, dtype=float)


def _compare(name, terms, K, alpha, tol, extra):
    rhs = K * np.exp(-alpha * terms.logr)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(rhs > 0, terms.lhs / rhs - 1.0, np.inf)
    worst = float(np.max(excess)) if excess.size else -1.0
    slack = float(np.min(rhs - terms.lhs)) if excess.size else 0.0
    bad = excess > tol
    witness = worst_pairs(np.where(bad, excess, -np.inf), [terms.t, terms.s, terms.lhs, rhs]) if bad.any() else []
    rep = CheckReport(name, worst <= tol, worst, tol, witness,
                      {"K": K, "alpha": alpha, "pairs": int(excess.size), "worst_slack": slack, **extra})
    return rep, slack


def verify_h_dichotomy(sys: LinearSystem, g: GrowthRate, proj: ProjectorFamily, K: float, alpha: float,
                       grid, cfg: IntegratorConfig = IntegratorConfig(), tol: float = 1e-9):
    """Check both dichotomy inequalities on all ordered grid pairs.

    Returns ``(report, certificate)``; the certificate is marked verified
    iff the report passes.
    """
    if K < 1 or not alpha > 0:
        raise DomainError("dichotomy constants need K >= 1 and alpha > 0")
    pts = _as_points(grid)
    below = _count_below_unit(g, pts)
    if below:
        log.warning("%d grid points lie below the group unit and are outside certification scope", below)
    terms = dichotomy_terms(sys, g, proj, pts, cfg)
    rep, slack = _compare("verify_h_dichotomy", terms, K, alpha, tol,
                          {"system": sys.name, "rate": g.name, "points_below_unit": below})
    cert = DichotomyCertificate(K, alpha, (float(pts[0]), float(pts[-1])), proj, tuple(pts.tolist()),
                                slack, rep.passed, tol, below)
    return rep, cert


def verify_constant_projector(sys, g, P, t0, K, alpha, grid, cfg=IntegratorConfig(), tol=1e-9):
    """The constant-projector form ``||Phi(t) P Phi^{-1}(s)|| <= K ...`` with
    ``Phi(t) = Phi(t, t0)``, evaluated literally from the fundamental matrix."""
    pts = _as_points(grid)
    P = np.asarray(P, dtype=float)
    prop = Propagator(sys, list(pts) + [t0], cfg)
    a = prop.idx(t0)
    X = np.stack([prop.phi_index(prop.idx(t), a) for t in pts])
    Xinv = np.stack([prop.phi_index(a, prop.idx(t)) for t in pts])
    I = np.eye(sys.n)
    lh = np.log(np.asarray(g.hv(pts), dtype=float))
    ii, jj = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")
    mp, mq = ii >= jj, ii <= jj
    lhs_p = spectral_norms(X[ii[mp]] @ P @ Xinv[jj[mp]])
    lhs_q = spectral_norms(X[ii[mq]] @ (I - P) @ Xinv[jj[mq]])
    terms = DichotomyTerms(
        t=np.concatenate([pts[ii[mp]], pts[ii[mq]]]),
        s=np.concatenate([pts[jj[mp]], pts[jj[mq]]]),
        lhs=np.concatenate([lhs_p, lhs_q]),
        logr=np.concatenate([lh[ii[mp]] - lh[jj[mp]], lh[jj[mq]] - lh[ii[mq]]]),
        block=np.array(["P"] * int(mp.sum()) + ["Q"] * int(mq.sum())),
    )
    rep, _ = _compare("verify_constant_projector", terms, K, alpha, tol, {"system": sys.name})
    return rep, terms


def invariance_residual(sys: LinearSystem, proj: ProjectorFamily, grid,
                        cfg: IntegratorConfig = IntegratorConfig(), tol: float = 1e-6) -> CheckReport:
    """Worst ``||P(t)Phi(t,s) - Phi(t,s)P(s)||`` over grid pairs, scaled by
    ``max(1, ||Phi(t,s)|| max(||P(t)||, ||P(s)||))``."""
    pts = _as_points(grid)
    _, table, Ps = _grid_setup(sys, proj, pts, cfg)
    m = len(pts)
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    phis = table[ii, jj]
    resid = spectral_norms(Ps[ii] @ phis - phis @ Ps[jj])
    pn = spectral_norms(Ps)
    scale = np.maximum(1.0, spectral_norms(phis) * np.maximum(pn[ii], pn[jj]))
    rel = resid / scale
    worst = float(rel.max())
    witness = worst_pairs(rel, [pts[ii], pts[jj], resid, scale]) if worst > tol else []
    return CheckReport("invariance_residual", worst <= tol, worst, tol, witness,
                       {"system": sys.name, "projector": proj.description, "pairs": int(rel.size)})


@dataclass
class ConstantsCurve:
    alphas: np.ndarray
    Ks: np.ndarray
    best_alpha: Optional[float]
    best_K: Optional[float]
    K_cap: float

    def to_dict(self):
        return jsonable({"alpha": self.alphas, "K": self.Ks, "best_alpha": self.best_alpha,
                         "best_K": self.best_K, "K_cap": self.K_cap})


def estimate_constants(sys, g, proj, grid, alpha_candidates: Sequence[float],
                       cfg=IntegratorConfig(), K_cap: float = 1e6, terms=None) -> ConstantsCurve:
    """Grid-supremum ``K(alpha)`` for each candidate exponent.

    ``K(alpha) = max lhs * (h-ratio)^alpha`` over both blocks.  Since every
    ratio is >= 1 the curve is nondecreasing in alpha.  The best pair is the
    largest alpha whose K stays within ``K_cap``.
    """
    alphas = np.asarray(sorted(float(a) for a in alpha_candidates))
    if alphas.size == 0:
        raise DomainError("need at least one alpha candidate")
    if terms is None:
        terms = dichotomy_terms(sys, g, proj, grid, cfg)
    with np.errstate(divide="ignore"):
        log_lhs = np.log(terms.lhs)
    log_K = np.max(log_lhs[None, :] + alphas[:, None] * terms.logr[None, :], axis=1)
    with np.errstate(over="ignore"):
        Ks = np.exp(log_K)
    ok = np.nonzero(Ks <= K_cap)[0]
    best = (float(alphas[ok[-1]]), float(Ks[ok[-1]])) if ok.size else (None, None)
    return ConstantsCurve(alphas, Ks, best[0], best[1], K_cap)


def sharp_alpha(terms: DichotomyTerms, delta: float = 0.05) -> float:
    """Smallest decay exponent seen on the grid: ``min -ln(lhs)/logr`` over
    pairs whose h-ratio is at least ``1 + delta`` (avoids 0/0 near the diagonal)."""
    sel = terms.logr >= math.log1p(delta)
    if not sel.any():
        raise DomainError("no grid pair is far enough apart to estimate an exponent")
    with np.errstate(divide="ignore"):
        rates = -np.log(terms.lhs[sel]) / terms.logr[sel]
    return float(np.min(rates))


def split_solution(sys, proj, x0, t0, grid, cfg=IntegratorConfig()):
    """``x+(t) = Phi(t,t0)P(t0)x0`` and ``x-(t) = Phi(t,t0)Q(t0)x0`` on the grid.

    Returns ``(x_plus, x_minus, x_full)`` as arrays of shape ``(len(grid), n)``.
    """
    pts = _as_points(grid)
    x0 = np.asarray(x0, dtype=float)
    times = list(pts) + [t0] + ([proj.anchor] if proj.kind == "constant" else [])
    prop = Propagator(sys, times, cfg)
    P0 = _projectors(prop, proj, [t0])[0]
    j = prop.idx(t0)
    phis = np.stack([prop.phi_index(prop.idx(t), j) for t in pts])
    xp = phis @ (P0 @ x0)
    xm = phis @ (x0 - P0 @ x0)
    return xp, xm, phis @ x0


def projector_bound(sys, proj, grid, cfg=IntegratorConfig()) -> float:
    pts = _as_points(grid)
    prop = Propagator(sys, list(pts) + ([proj.anchor] if proj.kind == "constant" else []), cfg)
    return float(np.max(spectral_norms(_projectors(prop, proj, pts))))


def elc_reconstruct(K1: float, K2: float, M: float) -> float:
    """Dichotomy constant rebuilt from the three ELC bounds (``||I|| = 1``)."""
    if min(K1, K2, M) <= 0:
        raise DomainError("ELC constants must be positive")
    return max(M * K1, (1.0 + M) * K2)


def elc_bound_from_growth(g, K1, K2, alpha, K0, beta, T) -> float:
    """Projector bound ``M`` implied by the two ELC decay bounds plus bounded
    growth ``||Phi(t*T, t)|| <= K0 h(T)^beta``.  Needs a T with
    ``h(T)^alpha / K2 > K1 h(T)^-alpha``."""
    hT = float(g.hv(T))
    gamma = hT ** alpha / K2 - K1 * hT ** (-alpha)
    if not gamma > 0:
        raise DomainError(f"T too small: K2^-1 h(T)^a - K1 h(T)^-a = {gamma:.3g} <= 0")
    return 1.0 + 2.0 * K0 * hT ** beta / gamma


def check_elc(sys, g, P, t0, K1, K2, M, alpha, grid, cfg=IntegratorConfig(), tol=1e-9,
              n_random: int = 20, seed: int = 0) -> CheckReport:
    """Check the three ELC conditions for a constant projector.

    Vectors are the canonical basis plus ``n_random`` seeded random unit
    vectors, standing in for "every vector".
    """
    pts = _as_points(grid)
    P = np.asarray(P, dtype=float)
    n = sys.n
    xis = sample_directions(n, n_random, seed)
    prop = Propagator(sys, list(pts) + [t0], cfg)
    a = prop.idx(t0)
    X = np.stack([prop.phi_index(prop.idx(t), a) for t in pts])
    I = np.eye(n)
    vp = np.linalg.norm(np.einsum("kij,vj->kvi", X, xis @ P.T), axis=-1)  # |X(t) P xi|
    vq = np.linalg.norm(np.einsum("kij,vj->kvi", X, xis @ (I - P).T), axis=-1)
    lh = np.log(np.asarray(g.hv(pts), dtype=float))
    excess, rows = [], []
    m = len(pts)
    for i in range(m):
        for j in range(m):
            if i >= j:  # t = pts[i] >= s = pts[j]
                rhs = K1 * np.exp(-alpha * (lh[i] - lh[j])) * vp[j]
                lhs = vp[i]
                label = 1.0
            else:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                ex = np.where(rhs > 0, lhs / rhs - 1, np.where(lhs > 1e-300, np.inf, -1.0))
            k = int(np.argmax(ex))
            excess.append(ex[k])
            rows.append((pts[i], pts[j], lhs[k], rhs[k], label))
    for i in range(m):
        for j in range(m):
            if j >= i:  # s = pts[j] >= t = pts[i]
                rhs = K2 * np.exp(-alpha * (lh[j] - lh[i])) * vq[j]
                lhs = vq[i]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ex = np.where(rhs > 0, lhs / rhs - 1, np.where(lhs > 1e-300, np.inf, -1.0))
                k = int(np.argmax(ex))
                excess.append(ex[k])
                rows.append((pts[i], pts[j], lhs[k], rhs[k], 2.0))
    for k in range(m):
        pk = spectral_norm(conjugate(P, X[k]))
        excess.append(pk / M - 1)
        rows.append((pts[k], pts[k], pk, M, 3.0))
    excess = np.asarray(excess)
    worst = float(excess.max())
    cols = list(zip(*rows))
    witness = worst_pairs(excess, cols) if worst > tol else []
    return CheckReport("check_elc", worst <= tol, worst, tol, witness,
                       {"K1": K1, "K2": K2, "M": M, "alpha": alpha, "vectors": len(xis),
                        "witness_columns": ["t", "s", "lhs", "rhs", "condition"]})


def extend_from_subinterval(cert: DichotomyCertificate, sys: LinearSystem, g: GrowthRate,
                            cfg: IntegratorConfig = IntegratorConfig(), prefix_points: int = 12,
                            tol: Optional[float] = None):
    """Carry a dichotomy on ``[T1, hi]`` down to ``[unit, hi]``.

    ``N = exp(int_unit^T1 ||A||)`` bounds the transition matrices on the
    prefix and the constant becomes ``N^2 K h(T1)^alpha`` with the same
    exponent and projector.  Returns ``(certificate, report, N)``.
    """
    T1 = float(cert.interval[0])
    e = unit(g)
    if not T1 > e:
        raise DomainError("the subinterval must start above the group unit")
    cuts = log_h_grid(g, e, T1, 17).array()
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(lambda u: spectral_norm(sys.A(u)), a, b, epsabs=1e-15,
                                epsrel=max(cfg.rel_tol, 1e-12), limit=200)
        if not math.isfinite(val):
            raise IntegrationError(f"quadrature of ||A|| failed on [{a}, {b}]")
        total += val
    N = math.exp(total)
    K_new = N * N * cert.K * float(g.hv(T1)) ** cert.alpha
    prefix = log_h_grid(g, e, T1, prefix_points).array()
    full = np.unique(np.concatenate([prefix, np.asarray(cert.grid)]))
    rep, new_cert = verify_h_dichotomy(sys, g, cert.projector, K_new, cert.alpha, full, cfg,
                                       cert.tolerance if tol is None else tol)
    rep.name = "extend_from_subinterval"
    rep.details.update({"N": N, "T1": T1, "K_sub": cert.K, "K_extended": K_new})
    return new_cert, rep, N
