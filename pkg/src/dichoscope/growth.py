"""Growth rates and the ordered group they induce on their domain.

A growth rate is a strictly increasing homeomorphism ``h: J -> (0, inf)``
with ``J = (a0, inf)``.  Transporting multiplication through ``h`` gives an
abelian totally ordered group ``(J, *)`` with ``t * s = h_inv(h(t) h(s))``.
For ``h = exp`` this is ordinary addition on the reals.

All arithmetic is done in h-space: map once with ``h``, combine, map back
once with ``h_inv``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr as _expr
from .errors import DomainError, EvalError
from .report import CheckReport

__all__ = [
    "GrowthRate", "GroupSample", "builtin_rate", "custom_rate", "ged_rate",
    "star", "inverse", "unit", "power", "leq_star", "abs_star", "dist_star",
    "ball", "log_h_grid", "group_property_suite", "default_sample", "verify_rate", "BUILTIN_RATES",
]

ROUND_TRIP_RTOL = 1e-9


@dataclass(frozen=True)
class GrowthRate:
    """A growth rate with its closed-form inverse.

    ``h`` and ``h_inv`` must accept floats and numpy arrays.  ``h_max`` is
    the largest h-value for which ``h_inv`` stays finite and the system
    coefficients stay representable; sampling helpers keep below it.
    """

    name: str
    a0: float
    h: Callable
    h_inv: Callable
    h_max: float = 1e300
    description: str = ""

    def __post_init__(self):
        if not callable(self.h) or not callable(self.h_inv):
            raise TypeError("h and h_inv must be callable")

    def check_domain(self, t):
        arr = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= self.a0):
            bad = arr[~(np.isfinite(arr) & (arr > self.a0))] if arr.ndim else arr
            raise DomainError(f"{np.ravel(bad)[:3].tolist()} outside J = ({self.a0}, inf) "
                              f"for growth rate {self.name!r}")
        return t

    def hv(self, t):
        """h(t) with a domain check."""
        self.check_domain(t)
        with np.errstate(all="ignore"):
            y = self.h(t)
        if not np.all(np.isfinite(y)):
            raise OverflowError(f"h overflowed for growth rate {self.name!r}")
        if np.any(np.asarray(y) <= 0):
            raise DomainError(f"h lost positivity for growth rate {self.name!r}")
        return y

    def back(self, y):
        """h_inv(y) for y in (0, inf); raises instead of returning inf/NaN."""
        y_arr = np.asarray(y, dtype=float)
        if np.any(np.isinf(y_arr)):
            raise OverflowError(f"h-space value overflowed for growth rate {self.name!r}")
        if np.any(~(y_arr > 0)):
            raise DomainError(f"h-space value must be positive, got {np.ravel(y_arr)[:3].tolist()}")
        with np.errstate(all="ignore"):
            t = self.h_inv(y)
        if not np.all(np.isfinite(t)):
            raise OverflowError(f"h_inv overflowed for growth rate {self.name!r}")
        if np.any(np.asarray(t) <= self.a0):
            raise DomainError(f"h_inv left J for growth rate {self.name!r} (underflow near a0)")
        return t

    def log_h(self, t):
        return np.log(self.hv(t))


@dataclass(frozen=True)
class GroupSample:
    values: tuple
    strategy: str = "explicit"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise DomainError("a group sample needs at least one point")
        if np.any(np.diff(vals) <= 0):
            raise DomainError("group sample values must be strictly increasing")

    def array(self):
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


# --------------------------------------------------------------------------
# group operations

def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def unit(g: GrowthRate):
    return _out(g.back(1.0))


def star(g: GrowthRate, t, s):
    return _out(g.back(g.hv(t) * g.hv(s)))


def inverse(g: GrowthRate, t):
    return _out(g.back(1.0 / g.hv(t)))


def power(g: GrowthRate, t, k: int):
    """``T^{*k}``; collapses to real exponentiation in h-space."""
    if k == 0:
        return unit(g)
    with np.errstate(over="ignore"):
        y = np.power(g.hv(t), float(k))
    return _out(g.back(y))


def leq_star(g: GrowthRate, s, t):
    """``s <=* t`` iff ``unit <= t * s^{*-1}``."""
    return _out(np.asarray(g.back(g.hv(t) / g.hv(s))) >= unit(g))


def abs_star(g: GrowthRate, t):
    e = unit(g)
    t_arr = np.asarray(g.check_domain(t), dtype=float)
    inv = np.asarray(inverse(g, t_arr))
    return _out(np.where(t_arr >= e, t_arr, inv))


def dist_star(g: GrowthRate, t, s):
    return abs_star(g, g.back(g.hv(t) / g.hv(s)))


def ball(g: GrowthRate, t, T):
    """Closed ball ``{u : |u * t^{*-1}|_* <= T}`` as ``(lo, hi)``."""
    e = unit(g)
    if T < e:
        raise DomainError(f"ball radius must satisfy T >= unit ({e}), got {T}")
    ht, hT = g.hv(t), g.hv(T)
    with np.errstate(under="ignore"):
        lo_y = ht / hT
    if lo_y <= 0:
        raise DomainError("lower ball endpoint underflows out of J")
    return float(g.back(lo_y)), float(g.back(ht * hT))


def log_h_grid(g: GrowthRate, lo, hi, n: int) -> GroupSample:
    """``n`` points with ``ln h`` equally spaced between ``lo`` and ``hi``.

    Group translations act as shifts in ``ln h``, so translates of grid
    points by a grid step are again grid points.
    """
    if n < 1:
        raise DomainError("grid size must be positive")
    if n == 1:
        return GroupSample((float(lo),), "log-h-uniform")
    u = np.linspace(math.log(g.hv(lo)), math.log(g.hv(hi)), n)
    pts = np.asarray(g.back(np.exp(u)), dtype=float)
    pts[0], pts[-1] = float(lo), float(hi)
    return GroupSample(tuple(pts.tolist()), "log-h-uniform")


# --------------------------------------------------------------------------
# builtin and custom rates

def _exp_rate():
    return GrowthRate("exp", -math.inf, np.exp, np.log, h_max=math.exp(690.0),
                      description="h(t) = exp(t) on R")


def _identity_rate():
    return GrowthRate("identity", 0.0, lambda t: t * 1.0, lambda y: y * 1.0,
                      h_max=1e300, description="h(t) = t on (0, inf)")


def _log1p_rate():
    # h_inv(y) = e^y - 1 overflows past y ~ 709; stay well inside
    return GrowthRate("log1p", 0.0, np.log1p, np.expm1, h_max=500.0,
                      description="h(t) = ln(1 + t) on (0, inf)")


DEFAULT_GED_GAMMA = "1 + 0.5*sin(t)"


class _PrimitiveTable:
    """Cumulative integral ``G(t) = int_0^t gamma`` on fixed panels.

    Knot values come from composite Gauss-Legendre; evaluation between knots
    adds one more Gauss-Legendre panel, so G is accurate to round-off for
    smooth gamma and is inverted by safeguarded Newton on the same formula.
    """

    NODES = 10

    def __init__(self, gamma, span, width):
        self.gamma = gamma
        n_side = int(math.ceil(span / width))
        self.knots = np.arange(-n_side, n_side + 1) * width
        self.width = width
        x, w = np.polynomial.legendre.leggauss(self.NODES)
        self.x, self.w = x, w
        left, right = self.knots[:-1], self.knots[1:]
        mid, half = (left + right) / 2, (right - left) / 2
        vals = gamma(mid[:, None] + half[:, None] * x[None, :])
        panels = (vals * w[None, :]).sum(axis=1) * half
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        zero = n_side  # index of the knot at t = 0
        self.G_knots = cum - cum[zero]
        if np.any(np.diff(self.G_knots) <= 0):
            raise DomainError("gamma must have positive integral on every panel for h to be strictly increasing")

    def G(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.knots[0]) or np.any(t > self.knots[-1]):
            raise DomainError(f"GED argument outside tabulated span [{self.knots[0]}, {self.knots[-1]}]")
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2)
        base = self.knots[idx]
        half = (t - base) / 2
        mid = base + half
        vals = self.gamma(mid[..., None] + half[..., None] * self.x)
        return self.G_knots[idx] + (vals * self.w).sum(axis=-1) * half

    def G_inv(self, g_in):
        g = np.asarray(g_in, dtype=float)
        if np.any(g < self.G_knots[0]) or np.any(g > self.G_knots[-1]):
            raise DomainError("GED h-value outside tabulated span")
        idx = np.clip(np.searchsorted(self.G_knots, g, side="right") - 1, 0, len(self.knots) - 2)
        lo, hi = self.knots[idx], self.knots[idx + 1]
        glo, ghi = self.G_knots[idx], self.G_knots[idx + 1]
        u = lo + (g - glo) / (ghi - glo) * (hi - lo)
        eps = np.finfo(float).eps
        u, lo, hi, g = (np.atleast_1d(a).astype(float).copy() for a in (u, lo, hi, g))
        active = np.ones(u.shape, dtype=bool)
        for _ in range(60):
            idx_a = np.nonzero(active)
            if idx_a[0].size == 0:
                break
            ua, ga = u[idx_a], g[idx_a]
            resid = self.G(ua) - ga
            slope = self.gamma(ua)
            la = np.where(resid < 0, np.maximum(lo[idx_a], ua), lo[idx_a])
            ha = np.where(resid > 0, np.minimum(hi[idx_a], ua), hi[idx_a])
            new = ua - resid / np.where(slope > 0, slope, np.inf)
            # bisect whenever Newton leaves the bracket
            new = np.where((new < la) | (new > ha), (la + ha) / 2, new)
            done = ((np.abs(resid) <= 64 * eps * np.maximum(1.0, np.abs(ga)))
                    | (np.abs(new - ua) <= 2 * eps * np.maximum(1.0, np.abs(ua))))
            u[idx_a], lo[idx_a], hi[idx_a] = new, la, ha
            active[idx_a] = ~done
        u = u.reshape(np.shape(g_in))
        return u


def ged_rate(gamma_text: str = DEFAULT_GED_GAMMA, span: float = 60.0, width: float = 0.125):
    """``h(t) = exp(int_0^t gamma)``, the generalized exponential rate."""
    gamma_expr = _expr.parse(gamma_text)
    gamma_fn = _expr.compile_checked(gamma_expr)

    def gamma(t):
        return np.asarray(gamma_fn(np.asarray(t, dtype=float)), dtype=float) * np.ones_like(t, dtype=float)

    table = _PrimitiveTable(gamma, span, width)

    def h(t):
        return _out(np.exp(table.G(t)))

    def h_inv(y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("h-space value must be positive")
        return _out(table.G_inv(np.log(y)))

    h_max = math.exp(0.98 * min(table.G_knots[-1], -table.G_knots[0]))
    return GrowthRate(f"ged:{gamma_text}", -math.inf, h, h_inv, h_max=h_max,
                      description=f"h(t) = exp(int_0^t ({gamma_text}))")


def custom_rate(h_text: str, h_inv_text: str, a0: float = -math.inf, name: str = "custom",
                probe: Optional[np.ndarray] = None, rtol: float = ROUND_TRIP_RTOL,
                h_max: float = 1e300) -> GrowthRate:
    """Rate from two expression strings; the round trip is checked on a probe grid."""
    h_fn = _expr.compile_checked(_expr.parse(h_text))
    inv_fn = _expr.compile_checked(_expr.parse(h_inv_text))
    g = GrowthRate(name, float(a0), h_fn, inv_fn, h_max=h_max,
                   description=f"h(t) = {h_text}; h_inv(y) = {h_inv_text}")
    verify_rate(g, probe, rtol)
    return g


def verify_rate(g: GrowthRate, probe=None, rtol: float = ROUND_TRIP_RTOL):
    """Check positivity, strict monotonicity and the h(h_inv(y)) round trip."""
    y = np.exp(np.linspace(-5.0, min(5.0, math.log(g.h_max) / 2), 41)) if probe is None else np.asarray(probe)
    try:
        t = np.asarray(g.back(y), dtype=float)
        back = np.asarray(g.hv(t), dtype=float)
    except (EvalError, OverflowError) as exc:
        raise DomainError(f"growth rate {g.name!r} failed to evaluate on the probe grid: {exc}") from exc
    if np.any(np.diff(t) <= 0) or np.any(np.diff(back) <= 0):
        raise DomainError(f"growth rate {g.name!r} is not strictly increasing on the probe grid")
    err = np.max(np.abs(back - y) / y)
    if err > rtol:
        raise DomainError(f"growth rate {g.name!r}: h(h_inv(y)) round trip error {err:.3g} exceeds {rtol:g}")
    return g


BUILTIN_RATES = ("exp", "identity", "log1p", "ged")


def builtin_rate(spec: str) -> GrowthRate:
    """Resolve ``exp``, ``identity``, ``log1p``, ``ged`` or ``ged:<gamma>``."""
    if spec == "exp":
        return _exp_rate()
    if spec == "identity":
        return _identity_rate()
    if spec == "log1p":
        return _log1p_rate()
    if spec == "ged":
        return ged_rate()
    if spec.startswith("ged:"):
        return ged_rate(spec[4:])
    raise DomainError(f"unknown growth rate {spec!r}; builtins are {', '.join(BUILTIN_RATES)}")


# --------------------------------------------------------------------------
# property suite

def default_sample(g: GrowthRate, n: int = 100) -> GroupSample:
    """Log-h-uniform sample, symmetric about the unit, small enough that
    products of three sample values remain representable."""
    U = min(4.0, math.log(g.h_max) / 3.5)
    u = np.linspace(-U, U, n)
    pts = np.asarray(g.back(np.exp(u)), dtype=float)
    return GroupSample(tuple(pts.tolist()), "log-h-uniform")


@dataclass
class _Worst:
    label: str
    value: float = 0.0
    witness: tuple = ()
    count: int = 0

    def update(self, resid, points):
        resid = np.asarray(resid, dtype=float)
        self.count += resid.size
        if resid.size == 0:
            return
        i = int(np.argmax(resid))
        r = float(np.ravel(resid)[i])
        if r > self.value or not self.witness:
            self.value = max(self.value, r)
            self.witness = tuple(float(np.ravel(np.broadcast_to(p, resid.shape))[i]) for p in points)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)


def group_property_suite(g: GrowthRate, sample: GroupSample, tol: float = 1e-9,
                         max_power: int = 40) -> CheckReport:
    """Evaluate the group identities on every pair and triple of the sample.

    Equalities are scored by relative error in h-space; order facts score
    1.0 per violated comparison.  The report passes iff every score stays
    within ``tol``.
    """
    x = sample.array()
    g.check_domain(x)
    e = unit(g)
    hx = np.asarray(g.hv(x), dtype=float)
    checks = {}

    def worst(label):
        return checks.setdefault(label, _Worst(label))

    T2, S2 = np.meshgrid(x, x, indexing="ij")
    hT, hS = np.meshgrid(hx, hx, indexing="ij")

    ts = star(g, T2, S2)
    h_ts = g.hv(ts)
    worst("h(t*s) = h(t)h(s)").update(_rel(h_ts, hT * hS), (T2, S2))
    inv_x = inverse(g, x)
    worst("h(s^-1) = 1/h(s)").update(_rel(g.hv(inv_x), 1.0 / hx), (x,))
    # (t*s)^-1 computed from the stored product
    worst("(t*s)^-1 = h_inv(1/(h(t)h(s)))").update(
        _rel(g.hv(inverse(g, ts)), 1.0 / (hT * hS)), (T2, S2))
    ts_inv = star(g, T2, np.broadcast_to(inv_x, S2.shape))
    worst("t*s^-1 = h_inv(h(t)/h(s))").update(_rel(g.hv(ts_inv), hT / hS), (T2, S2))
    st_inv = star(g, S2, np.broadcast_to(inv_x[:, None], T2.shape))
    worst("(t*s^-1)^-1 = s*t^-1").update(_rel(g.hv(inverse(g, ts_inv)), g.hv(st_inv)), (T2, S2))
    worst("commutativity").update(_rel(g.hv(star(g, S2, T2)), h_ts), (T2, S2))
    worst("t*t^-1 = unit").update(_rel(g.hv(star(g, x, inv_x)), np.ones_like(x)), (x,))
    worst("t*unit = t").update(_rel(g.hv(star(g, x, e)), hx), (x,))

    # order: real order and group order coincide
    le = np.asarray(leq_star(g, T2, S2))  # T2 <=* S2
    worst("s <=* t iff s <= t").update((le != (T2 <= S2)).astype(float), (T2, S2))
    worst("t <= s iff s^-1 <= t^-1").update(
        ((T2 <= S2) != (inv_x[None, :] <= inv_x[:, None])).astype(float), (T2, S2))

    a_x = abs_star(g, x)
    worst("|t|* = |t^-1|*").update(_rel(np.asarray(a_x), np.asarray(abs_star(g, inv_x))), (x,))
    worst("|t|* >= unit").update((np.asarray(a_x) < e).astype(float), (x,))
    h_abs = g.hv(a_x)
    abs_ts = abs_star(g, ts)
    tri = np.asarray(g.hv(abs_ts)) / (h_abs[:, None] * h_abs[None, :]) - 1.0
    worst("triangle |t*s|* <= |t|* * |s|*").update(np.maximum(tri, 0.0), (T2, S2))
    d = dist_star(g, T2, S2)
    worst("d*(t,s) = d*(s,t)").update(_rel(g.hv(d), g.hv(dist_star(g, S2, T2))), (T2, S2))
    worst("d*(t,t) = unit").update(_rel(g.hv(dist_star(g, x, x)), np.ones_like(x)), (x,))

    # triples: associativity and translation invariance of the order
    for u in x:
        ux = np.asarray(star(g, u, x))  # u*t for every sample t
        lhs = g.hv(star(g, ux[:, None], S2))
        rhs = g.hv(star(g, u, ts))
        U3 = np.full_like(T2, u)
        worst("associativity").update(_rel(lhs, rhs), (U3, T2, S2))
        worst("t <= s iff u*t <= u*s").update(
            ((T2 <= S2) != (ux[:, None] <= ux[None, :])).astype(float), (U3, T2, S2))
        xu = np.asarray(star(g, x, u))
        worst("t <= s iff t*u <= s*u").update(
            ((T2 <= S2) != (xu[:, None] <= xu[None, :])).astype(float), (U3, T2, S2))

    # integer powers and the translate spacing of the T-partition
    big = x[x > e]
    ks = np.arange(-max_power, max_power + 1, dtype=float)
    Tk, Kk = np.meshgrid(big, ks, indexing="ij")
    with np.errstate(over="ignore", under="ignore"):
        target = np.power(g.hv(Tk), Kk)
    ok = (target < g.h_max) & (target > 1.0 / g.h_max)
    skipped = int(ok.size - ok.sum())
    Tk, Kk, target = Tk[ok], Kk[ok], target[ok]
    hp = np.empty_like(target)
    for k in np.unique(Kk):
        sel = Kk == k
        hp[sel] = g.hv(power(g, Tk[sel], int(k)))
    worst("h(T^*k) = h(T)^k").update(_rel(hp, target), (Tk, Kk))

    s_pts = x[:: max(1, len(x) // 10)]
    w_space = worst("d*(s*T^k, s*T^(k-1)) = T")
    for k in range(-3, 4):
        Ts, Ss = np.meshgrid(big, s_pts, indexing="ij")
        with np.errstate(over="ignore", under="ignore"):
            hi_y = g.hv(Ss) * np.power(g.hv(Ts), float(max(k, k - 1)))
            lo_y = g.hv(Ss) * np.power(g.hv(Ts), float(min(k, k - 1)))
        fits = (hi_y < g.h_max) & (lo_y > 1.0 / g.h_max)
        skipped += int(fits.size - fits.sum())
        Ts, Ss = Ts[fits], Ss[fits]
        if Ts.size == 0:
            continue
        a = star(g, Ss, power(g, Ts, k))
        b = star(g, Ss, power(g, Ts, k - 1))
        w_space.update(_rel(g.hv(dist_star(g, a, b)), g.hv(Ts)), (Ss, Ts, np.full_like(Ts, k)))

    worst_val = max(c.value for c in checks.values())
    witness = [(c.label, *c.witness, c.value) for c in checks.values() if c.value > tol]
    return CheckReport(
        name="group_property_suite",
        passed=worst_val <= tol,
        worst_violation=worst_val,
        tolerance=tol,
        witness=witness,
        details={
            "rate": g.name,
            "sample_size": len(x),
            "per_identity": {c.label: c.value for c in checks.values()},
            "evaluations": sum(c.count for c in checks.values()),
            "skipped_unrepresentable": skipped,
        },
    )
