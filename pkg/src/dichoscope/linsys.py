"""Linear systems ``x' = A(t) x`` and their transition matrices.

Transition matrices are integrated with a Dormand-Prince 5(4) pair under PI
step-size control.  Matrices over long spans are composed from factors over
consecutive grid intervals (see :class:`Propagator`), which keeps each
integration short and each factor well conditioned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import expr as _expr
from .errors import DomainError, EvalError, IntegrationError
from .growth import GrowthRate, log_h_grid, star
from .report import CheckReport, worst_pairs

log = logging.getLogger(__name__)

__all__ = [
    "LinearSystem", "IntegratorConfig", "TransitionMatrix", "Propagator",
    "paper_log_system", "paper_power_system", "const_diag_system", "zero_system",
    "custom_system", "builtin_system", "coefficient", "transition", "solve",
    "cocycle_check", "oracle_agreement", "stepanov_norm", "spectral_norm", "spectral_norms",
    "integrate_matrix", "sample_directions",
]


def spectral_norm(M) -> float:
    """Largest singular value; ``||I|| = 1`` in this norm."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 2 and M.shape == (1, 1):
        return abs(float(M[0, 0]))
    return float(np.linalg.norm(M, 2))


def spectral_norms(stack) -> np.ndarray:
    """Spectral norms of a stack of matrices (last two axes)."""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[-1] == 0:
        return np.zeros(stack.shape[:-2])
    return np.linalg.norm(stack, ord=2, axis=(-2, -1))


def sample_directions(n: int, n_random: int = 20, seed: int = 0) -> np.ndarray:
    """Canonical basis of R^n followed by ``n_random`` seeded random unit vectors."""
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(n_random, n))
    return np.vstack([np.eye(n), R / np.linalg.norm(R, axis=1, keepdims=True)])


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A(t) x`` on ``(lo, hi)``.

    ``A`` maps a float to an ``n x n`` array.  ``oracle`` is an optional
    closed form ``(t, s) -> Phi(t, s)`` used for cross-checks.
    """

    name: str
    n: int
    A: Callable[[float], np.ndarray]
    lo: float = -math.inf
    hi: float = math.inf
    oracle: Optional[Callable[[float, float], np.ndarray]] = None
    entries: Optional[tuple] = None
    diagonal: bool = False

    def check_time(self, t):
        if not (self.lo < t < self.hi) or not math.isfinite(t):
            raise DomainError(f"t = {t} outside the domain ({self.lo}, {self.hi}) of system {self.name!r}")
        return t


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    max_steps: int = 200_000
    use_oracle: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass(frozen=True)
class TransitionMatrix:
    t: float
    s: float
    M: np.ndarray


# --------------------------------------------------------------------------
# builtin systems

def _diag_system(name, coeffs, oracle, lo=0.0, entries=None):
    n = len(coeffs)

    def A(t):
        return np.diag([c(t) for c in coeffs])

    return LinearSystem(name, n, A, lo=lo, oracle=oracle, entries=entries, diagonal=True)


def paper_log_system() -> LinearSystem:
    """diag(-a, a) with a = 1/((1+t) ln(1+t)) on t > 0; dichotomic for h = ln(1+t)."""

    def a(t):
        return 1.0 / ((1.0 + t) * math.log1p(t))

    def oracle(t, s):
        r = math.log1p(s) / math.log1p(t)
        return np.diag([r, 1.0 / r])

    return _diag_system("paper_log", [lambda t: -a(t), a], oracle,
                        entries=("-1/((1+t)*ln(1+t))", "0", "0", "1/((1+t)*ln(1+t))"))


def paper_power_system(alpha: float) -> LinearSystem:
    """diag(-alpha/t, alpha/t) on t > 0; dichotomic for h = t."""
    alpha = float(alpha)
    if not alpha > 0:
        raise DomainError("paper_power needs a positive exponent")

    def oracle(t, s):
        r = (s / t) ** alpha
        return np.diag([r, 1.0 / r])

    return _diag_system(f"paper_power:{alpha:g}", [lambda t: -alpha / t, lambda t: alpha / t], oracle,
                        entries=(f"-{alpha!r}/t", "0", "0", f"{alpha!r}/t"))


def const_diag_system(lams: Sequence[float]) -> LinearSystem:
    lams = [float(x) for x in lams]

    def A(t):
        return np.diag(lams)

    def oracle(t, s):
        return np.diag(np.exp(np.asarray(lams) * (t - s)))

    n = len(lams)
    entries = tuple(repr(lams[i]) if i == j else "0" for i in range(n) for j in range(n))
    return LinearSystem("const_diag:" + ",".join(f"{x:g}" for x in lams), n, A,
                        oracle=oracle, entries=entries, diagonal=True)


def zero_system(n: int = 2) -> LinearSystem:
    Z = np.zeros((n, n))
    return LinearSystem(f"zero:{n}", n, lambda t: Z.copy(), oracle=lambda t, s: np.eye(n),
                        entries=("0",) * (n * n), diagonal=True)


def custom_system(n: int, entries: Sequence[str], lo: float = -math.inf, hi: float = math.inf,
                  name: str = "custom") -> LinearSystem:
    """System whose ``n*n`` entries (row-major) are expression strings."""
    if len(entries) != n * n:
        raise DomainError(f"expected {n * n} entries for a {n}x{n} system, got {len(entries)}")
    fns = []
    for k, text in enumerate(entries):
        try:
            fns.append(_expr.compile_checked(_expr.parse(text)))
        except Exception as exc:
            exc.args = (f"entry ({k // n},{k % n}): {exc}",)
            raise
    diagonal = all(entries[i * n + j].strip() in ("0", "0.0") for i in range(n) for j in range(n) if i != j)

    def A(t):
        out = np.empty((n, n))
        for k, f in enumerate(fns):
            try:
                out[k // n, k % n] = f(t)
            except EvalError as exc:
                raise EvalError(f"entry ({k // n},{k % n}) at t={t}: {exc}") from exc
        return out

    return LinearSystem(name, n, A, lo=lo, hi=hi, entries=tuple(entries), diagonal=diagonal)


def builtin_system(spec: str) -> LinearSystem:
    """Resolve ``paper_log``, ``paper_power:<a>``, ``const_diag:<l1,...>``, ``zero:<n>``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "paper_log" and not arg:
            return paper_log_system()
        if name == "paper_power":
            return paper_power_system(float(arg) if arg else 1.0)
        if name == "const_diag":
            return const_diag_system([float(x) for x in arg.split(",")])
        if name == "zero":
            return zero_system(int(arg) if arg else 2)
    except ValueError as exc:
        raise DomainError(f"bad argument in system spec {spec!r}: {exc}") from exc
    raise DomainError(f"unknown system {spec!r}")


def coefficient(sys: LinearSystem, t: float) -> np.ndarray:
    sys.check_time(t)
    return np.asarray(sys.A(t), dtype=float)


# --------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_HAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_HAT

# PI controller constants (Hairer & Wanner, DOPRI5)
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_SAFETY, _FAC_MIN, _FAC_MAX = 0.9, 0.2, 10.0


def _err_norm(err, y0, y1, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return math.sqrt(float(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, direction, cfg, span):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span, cfg.max_step)


def integrate_matrix(A: Callable[[float], np.ndarray], t0: float, t1: float, M0: np.ndarray,
                     cfg: IntegratorConfig = IntegratorConfig(), h_hint: Optional[float] = None):
    """Integrate ``M' = A(t) M`` from ``t0`` to ``t1`` (either direction).

    Returns ``(M(t1), last_accepted_step, steps_taken)``.
    """
    M = np.array(M0, dtype=float)
    if t1 == t0:
        return M, h_hint, 0
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)

    def f(t, Y):
        return np.asarray(A(t), dtype=float) @ Y

    t = t0
    k1 = f(t, M)
    h = h_hint if h_hint else _initial_step(f, t, M, k1, direction, cfg, span)
    # the generic guess is absolute; keep it clear of the relative underflow floor at large |t|
    h = min(max(h, 1024 * np.finfo(float).eps * max(1.0, abs(t0))), span, cfg.max_step)
    err_prev = 1e-4
    steps = 0
    last_h = h
    while True:
        remaining = abs(t1 - t)
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            break
        if steps >= cfg.max_steps:
            raise IntegrationError(f"max_steps={cfg.max_steps} exceeded integrating from {t0} to {t1} "
                                   f"(reached t={t})")
        h = min(h, cfg.max_step)
        last_step = h >= remaining
        if last_step:
            h = remaining
        ks = [k1]
        for i in range(1, 7):
            Yi = M + direction * h * sum(a * k for a, k in zip(_A[i], ks))
            ks.append(f(t + direction * h * _C[i], Yi))
        M_new = M + direction * h * sum(b * k for b, k in zip(_B, ks))
        err_vec = direction * h * sum(e * k for e, k in zip(_E, ks))
        err = _err_norm(err_vec, M, M_new, cfg)
        steps += 1
        if not np.all(np.isfinite(M_new)):
            err = math.inf
        if err <= 1.0:
            t = t1 if last_step else t + direction * h
            M = M_new
            k1 = ks[6]  # first-same-as-last
            last_h = h
            fac = _SAFETY * err ** (-_EXPO) * err_prev ** _BETA if err > 0 else _FAC_MAX
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            err_prev = max(err, 1e-4)
            h *= fac
        else:
            fac = _SAFETY * err ** (-_EXPO) if math.isfinite(err) else _FAC_MIN
            h *= min(1.0, max(_FAC_MIN, fac))
        if h < 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}")
    return M, last_h, steps


def transition(sys: LinearSystem, t: float, s: float,
               cfg: IntegratorConfig = IntegratorConfig()) -> TransitionMatrix:
    """``Phi(t, s)``, integrating backward when ``t < s``."""
    sys.check_time(t)
    sys.check_time(s)
    if cfg.use_oracle and sys.oracle is not None:
        return TransitionMatrix(t, s, np.asarray(sys.oracle(t, s), dtype=float))
    M, _, _ = integrate_matrix(sys.A, s, t, np.eye(sys.n), cfg)
    return TransitionMatrix(t, s, M)


def solve(sys: LinearSystem, t: float, t0: float, x0, cfg: IntegratorConfig = IntegratorConfig()):
    return transition(sys, t, t0, cfg).M @ np.asarray(x0, dtype=float)


# --------------------------------------------------------------------------
# grid propagation

class Propagator:
    """Transition matrices between all points of a sorted time set.

    One short integration per consecutive interval; ``Phi`` between any two
    stored times is the ordered product of interval factors (forward) or of
    their inverses (backward).  Products are cached per pair.
    """

    def __init__(self, sys: LinearSystem, times, cfg: IntegratorConfig = IntegratorConfig()):
        times = np.unique(np.asarray(times, dtype=float))
        for t in (times[0], times[-1]):
            sys.check_time(float(t))
        self.sys, self.cfg = sys, cfg
        self.times = times
        self.index = {float(t): i for i, t in enumerate(times)}
        n = sys.n
        m = len(times)
        self.forward = np.empty((max(m - 1, 0), n, n))
        self.backward = np.empty((max(m - 1, 0), n, n))
        h = None
        self.steps = 0
        for k in range(m - 1):
            a, b = float(times[k]), float(times[k + 1])
            if cfg.use_oracle and sys.oracle is not None:
                F = np.asarray(sys.oracle(b, a), dtype=float)
            else:
                F, h, steps = integrate_matrix(sys.A, a, b, np.eye(n), cfg, h_hint=h)
                self.steps += steps
            self.forward[k] = F
            try:
                self.backward[k] = np.linalg.inv(F)
            except np.linalg.LinAlgError as exc:
                raise IntegrationError(f"singular transition factor on [{a}, {b}]") from exc
        self._fund = None
        self._cache = {}

    def idx(self, t) -> int:
        try:
            return self.index[float(t)]
        except KeyError:
            raise DomainError(f"time {t} is not on the propagator grid") from None

    def phi_index(self, i: int, j: int) -> np.ndarray:
        """``Phi(times[i], times[j])``."""
        key = (i, j)
        got = self._cache.get(key)
        if got is not None:
            return got
        n = self.sys.n
        M = np.eye(n)
        if i > j:
            for k in range(j, i):
                M = self.forward[k] @ M
        elif i < j:
            for k in range(j - 1, i - 1, -1):
                M = self.backward[k] @ M
        self._cache[key] = M
        return M

    def phi(self, t, s) -> np.ndarray:
        return self.phi_index(self.idx(t), self.idx(s))

    def from_anchor(self, anchor_index: int = 0) -> np.ndarray:
        """Stack ``Phi(times[k], times[anchor])`` for every k."""
        m, n = len(self.times), self.sys.n
        out = np.empty((m, n, n))
        out[anchor_index] = np.eye(n)
        for k in range(anchor_index + 1, m):
            out[k] = self.forward[k - 1] @ out[k - 1]
        for k in range(anchor_index - 1, -1, -1):
            out[k] = self.backward[k] @ out[k + 1]
        return out

    def pair_table(self, sub_times=None) -> np.ndarray:
        """``table[a, b] = Phi(sub[a], sub[b])`` over a subset of stored times."""
        sub = self.times if sub_times is None else np.asarray(sub_times, dtype=float)
        ids = [self.idx(t) for t in sub]
        m, n = len(ids), self.sys.n
        table = np.empty((m, m, n, n))
        for b, j in enumerate(ids):
            # forward sweep from column j, accumulating factors once
            M = np.eye(n)
            pos = j
            for a in sorted(range(m), key=lambda a: ids[a]):
                i = ids[a]
                if i < j:
                    continue
                while pos < i:
                    M = self.forward[pos] @ M
                    pos += 1
                table[a, b] = M
            M = np.eye(n)
            pos = j
            for a in sorted(range(m), key=lambda a: -ids[a]):
                i = ids[a]
                if i > j:
                    continue
                while pos > i:
                    M = self.backward[pos - 1] @ M
                    pos -= 1
                table[a, b] = M
        return table


# --------------------------------------------------------------------------
# checks

def oracle_agreement(sys: LinearSystem, grid, cfg: IntegratorConfig = IntegratorConfig(),
                     tol: float = 1e-6) -> CheckReport:
    """Relative spectral-norm gap between numeric and closed-form ``Phi`` on grid pairs."""
    if sys.oracle is None:
        raise DomainError(f"system {sys.name!r} has no analytic oracle")
    numeric_cfg = IntegratorConfig(cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.max_steps, False)
    pts = np.asarray(grid, dtype=float)
    prop = Propagator(sys, pts, numeric_cfg)
    table = prop.pair_table(pts)
    rows, gaps = [], []
    for a, t in enumerate(pts):
        for b, s in enumerate(pts):
            exact = np.asarray(sys.oracle(t, s), dtype=float)
            gap = spectral_norm(table[a, b] - exact) / spectral_norm(exact)
            rows.append((t, s))
            gaps.append(gap)
    gaps = np.asarray(gaps)
    worst = float(gaps.max())
    wit = [(t, s, g) for (t, s), g in zip(rows, gaps) if g > tol][:5]
    return CheckReport("oracle_agreement", worst <= tol, worst, tol, wit,
                       {"system": sys.name, "grid_size": len(pts), "steps": prop.steps})


def cocycle_check(sys: LinearSystem, grid, cfg: IntegratorConfig = IntegratorConfig(),
                  tol: float = 1e-6, max_triples: int = 2000) -> CheckReport:
    """``Phi(t,u)Phi(u,s) = Phi(t,s)`` and ``Phi(t,s)Phi(s,t) = I``.

    Every pair is integrated independently so the identities are genuinely
    tested rather than holding by construction.  Residuals are spectral
    norms scaled by ``max(1, ||Phi(t,u)|| ||Phi(u,s)||)``.
    """
    pts = [float(x) for x in grid]
    n = len(pts)
    phis = {}
    failures = []
    for t in pts:
        for s in pts:
            try:
                phis[t, s] = transition(sys, t, s, cfg).M
            except IntegrationError as exc:
                failures.append((t, s, str(exc)))
    if failures:
        return CheckReport("cocycle_check", False, math.inf, tol,
                           [(t, s, math.inf, msg) for t, s, msg in failures[:5]],
                           {"system": sys.name, "failed_pairs": len(failures)})
    triples = [(a, b, c) for a in range(n) for b in range(n) for c in range(n)]
    if len(triples) > max_triples:
        stride = len(triples) / max_triples
        triples = [triples[int(k * stride)] for k in range(max_triples)]
    resid, rows = [], []
    I = np.eye(sys.n)
    for a, b, c in triples:
        t, u, s = pts[a], pts[b], pts[c]
        P1, P2 = phis[t, u], phis[u, s]
        scale = max(1.0, spectral_norm(P1) * spectral_norm(P2))
        resid.append(spectral_norm(P1 @ P2 - phis[t, s]) / scale)
        rows.append((t, u, s))
    for t in pts:
        for s in pts:
            scale = max(1.0, spectral_norm(phis[t, s]) * spectral_norm(phis[s, t]))
            resid.append(spectral_norm(phis[t, s] @ phis[s, t] - I) / scale)
            rows.append((t, s, s))
    resid = np.asarray(resid)
    worst = float(resid.max()) if resid.size else 0.0
    cols = list(zip(*rows)) if rows else [[], [], []]
    wit = [w for w in worst_pairs(resid, [*cols, resid]) if w[-1] > tol]
    return CheckReport("cocycle_check", worst <= tol, worst, tol, wit,
                       {"system": sys.name, "triples": len(triples), "grid_size": n})


def stepanov_norm(sys: LinearSystem, g: GrowthRate, T: float, grid,
                  cfg: IntegratorConfig = IntegratorConfig(), pieces: int = 16) -> float:
    """``max_s int_s^{s*T} ||A(tau)|| dtau`` over the sampled ``s``.

    Each window is cut at log-h-uniform breakpoints before adaptive
    quadrature so that slowly growing rates do not starve the integrator.
    ``exp`` of the result bounds the growth over windows of group length T.
    """
    from .growth import unit
    if not T > unit(g):
        raise DomainError("the window length T must exceed the group unit")

    def integrand(tau):
        return spectral_norm(sys.A(tau))

    best = 0.0
    for s in grid:
        s = float(s)
        end = star(g, s, T)
        sys.check_time(s)
        sys.check_time(end)
        cuts = log_h_grid(g, s, end, pieces + 1).array()
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            val, err = integrate.quad(integrand, a, b, epsabs=1e-15, epsrel=max(cfg.rel_tol, 1e-12),
                                      limit=200)
            if not math.isfinite(val):
                raise IntegrationError(f"quadrature failed on [{a}, {b}]")
            total += val
        best = max(best, total)
    return best
