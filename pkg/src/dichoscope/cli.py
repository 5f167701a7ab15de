"""Command-line front end.

A JSON config names a growth rate, a system, an interval and grid, and an
ordered list of checks.  ``run`` executes them and writes a JSON report;
exit status is 0 when every check passes, 2 when any check fails and 1 on
configuration or runtime errors.

Config layout (``schema_version`` 1)::

    {
      "schema_version": 1,
      "growth_rate": "log1p" | {"h": "...", "h_inv": "...", "a0": 0},
      "system": "paper_log" | {"n": 2, "entries": ["...", ...], "lo": 0},
      "interval": [lo, hi],          # number, expression string, or {"h_value": y}
      "grid": {"size": 40, "strategy": "log_h" | "uniform"},
      "integrator": {"rel_tol": 1e-9, "abs_tol": 1e-12, "max_steps": 200000},
      "seed": 0,
      "tolerance": 1e-6,
      "checks": [{"type": "dichotomy", "K": 1.000001, "alpha": 1, "projector": [[1,0],[0,0]]}, ...],
      "output": {"report": "report.json", "plot_dir": "plots"}
    }

Time-valued fields (``T``, interval ends) accept ``{"h_value": y}`` meaning
the point where h equals y.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys as _sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from . import criteria, dichotomy, growth, growth_bounds, linsys
from .errors import ConfigError, DichoscopeError
from .expr import parse
from .report import CheckReport, jsonable

log = logging.getLogger("dichoscope")

SCHEMA_VERSION = 1
BUNDLED = ("paper_log.example", "zero_negative.example")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


# --------------------------------------------------------------------------
# config

@dataclass
class AnalysisConfig:
    raw: dict
    rate: growth.GrowthRate
    system: linsys.LinearSystem
    interval: tuple
    grid: np.ndarray
    grid_strategy: str
    integrator: linsys.IntegratorConfig
    seed: int
    tolerance: float
    checks: list
    report_path: str
    plot_dir: Optional[str]


def _require(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def _number(value, path, g=None):
    """Numbers, constant expression strings, or ``{"h_value": y}`` (needs a rate)."""
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(parse(value)(0.0))
        except DichoscopeError as exc:
            raise ConfigError(path, f"bad expression: {exc}") from exc
    if isinstance(value, dict) and set(value) == {"h_value"} and g is not None:
        y = _number(value["h_value"], f"{path}.h_value")
        _require(y > 0, f"{path}.h_value", "h_value must be positive")
        try:
            return float(g.back(y))
        except (DichoscopeError, OverflowError) as exc:
            raise ConfigError(path, str(exc)) from exc
    raise ConfigError(path, "expected a number, an expression string, or {\"h_value\": y}")


def _rate(value, path="growth_rate"):
    try:
        if isinstance(value, str):
            return growth.builtin_rate(value)
        _require(isinstance(value, dict), path, "expected a builtin name or an object")
        if "builtin" in value:
            name = value["builtin"]
            if name == "ged" and "gamma" in value:
                return growth.ged_rate(value["gamma"])
            return growth.builtin_rate(name)
        for key in ("h", "h_inv"):
            _require(isinstance(value.get(key), str), f"{path}.{key}", "expression string required")
        a0 = _number(value.get("a0", -math.inf), f"{path}.a0")
        return growth.custom_rate(value["h"], value["h_inv"], a0, value.get("name", "custom"))
    except ConfigError:
        raise
    except DichoscopeError as exc:
        raise ConfigError(path, str(exc)) from exc


def _system(value, path="system"):
    try:
        if isinstance(value, str):
            return linsys.builtin_system(value)
        _require(isinstance(value, dict), path, "expected a builtin name or an object")
        n = value.get("n")
        _require(isinstance(n, int) and n >= 1, f"{path}.n", "n must be a positive integer")
        entries = value.get("entries")
        _require(isinstance(entries, list) and len(entries) == n * n, f"{path}.entries",
                 f"need {n * n} expression strings in row-major order")
        lo = _number(value.get("lo", -math.inf), f"{path}.lo")
        hi = _number(value.get("hi", math.inf), f"{path}.hi")
        return linsys.custom_system(n, entries, lo, hi, value.get("name", "custom"))
    except ConfigError:
        raise
    except DichoscopeError as exc:
        raise ConfigError(path, str(exc)) from exc


def _matrix(value, n, path):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric matrix") from None
    _require(M.shape == (n, n), path, f"expected a {n}x{n} matrix")
    return M


CHECK_TYPES = {
    "group_suite", "oracle", "cocycle", "dichotomy", "invariance", "estimate_constants",
    "split", "elc", "extend", "growth_definition", "matrix_bound", "alpha_beta",
    "noncritical", "theta_curve", "expansive", "pipeline", "classify",
}
FAMILIES = {
    "bounds": {"growth_definition", "matrix_bound", "alpha_beta"},
    "noncritical": {"noncritical", "theta_curve"},
    "expansive": {"expansive"},
    "estimate": {"estimate_constants", "theta_curve"},
    "pipeline": {"pipeline"},
}


def _validate_check(chk, k, cfg_rate, n):
    path = f"checks[{k}]"
    _require(isinstance(chk, dict), path, "each check must be an object")
    ctype = chk.get("type")
    _require(ctype in CHECK_TYPES, f"{path}.type", f"unknown check type {ctype!r}")
    out = dict(chk)
    for key in ("K", "alpha", "L", "beta", "K0", "C_T", "K_cap", "threshold", "K1", "K2", "M"):
        if key in chk:
            out[key] = _number(chk[key], f"{path}.{key}")
    for key in ("T", "T1", "horizon", "t0"):
        if key in chk:
            out[key] = _number(chk[key], f"{path}.{key}", cfg_rate)
    if "theta" in chk:
        th = _number(chk["theta"], f"{path}.theta")
        _require(0 < th < 1, f"{path}.theta", "theta must lie in (0,1)")
        out["theta"] = th
    if "theta_target" in chk:
        th = _number(chk["theta_target"], f"{path}.theta_target")
        _require(0 < th < 1, f"{path}.theta_target", "theta must lie in (0,1)")
        out["theta_target"] = th
    if "K" in out and ctype in ("dichotomy", "pipeline"):
        _require(out["K"] >= 1, f"{path}.K", "K must be >= 1")
    if "alpha" in out and ctype in ("dichotomy", "pipeline"):
        _require(out["alpha"] > 0, f"{path}.alpha", "alpha must be positive")
    if "projector" in chk:
        out["projector"] = _matrix(chk["projector"], n, f"{path}.projector")
    if "kind" in chk:
        _require(chk["kind"] in growth_bounds.KINDS, f"{path}.kind",
                 f"kind must be one of {', '.join(growth_bounds.KINDS)}")
    for key in ("alphas", "T_values"):
        if key in chk:
            _require(isinstance(chk[key], list) and chk[key], f"{path}.{key}", "need a nonempty list")
            out[key] = [_number(v, f"{path}.{key}[{i}]", cfg_rate) for i, v in enumerate(chk[key])]
    needed = {
        "dichotomy": ("K", "alpha", "projector"), "invariance": ("projector",),
        "estimate_constants": ("projector", "alphas"), "split": ("projector",),
        "elc": ("projector", "K1", "K2", "M", "alpha"), "extend": ("projector", "K", "alpha", "T1"),
        "growth_definition": ("kind", "T", "C_T"), "matrix_bound": ("kind", "K0", "beta"),
        "alpha_beta": ("projector",), "noncritical": ("T", "theta"), "theta_curve": ("T_values",),
        "expansive": ("L", "beta"), "pipeline": ("K", "alpha", "projector"),
    }
    for key in needed.get(ctype, ()):
        _require(key in out, f"{path}.{key}", f"required for {ctype} checks")
    out.setdefault("name", ctype)
    return out


def load_config(source, overrides: Optional[dict] = None) -> AnalysisConfig:
    """Parse and validate a config from a path, bundled name, or dict."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        text = _read_config_text(str(source))
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "<root>", "config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    version = raw.get("schema_version", SCHEMA_VERSION)
    _require(version == SCHEMA_VERSION, "schema_version", f"unsupported schema version {version}")
    for key in ("growth_rate", "system", "interval"):
        _require(key in raw, key, "missing required field")
    g = _rate(raw["growth_rate"])
    system = _system(raw["system"])
    iv = raw["interval"]
    _require(isinstance(iv, list) and len(iv) == 2, "interval", "expected [lo, hi]")
    lo, hi = _number(iv[0], "interval[0]", g), _number(iv[1], "interval[1]", g)
    _require(lo < hi, "interval", "need lo < hi")
    _require(lo > max(g.a0, system.lo) and hi < system.hi, "interval", "interval must lie inside the domain")
    grid_cfg = raw.get("grid", {})
    size = grid_cfg.get("size", 40)
    _require(isinstance(size, int) and size >= 2, "grid.size", "grid size must be an integer >= 2")
    strategy = grid_cfg.get("strategy", "log_h")
    _require(strategy in ("log_h", "uniform"), "grid.strategy", "strategy must be log_h or uniform")
    try:
        pts = (growth.log_h_grid(g, lo, hi, size).array() if strategy == "log_h"
               else np.linspace(lo, hi, size))
    except (DichoscopeError, OverflowError) as exc:
        raise ConfigError("interval", str(exc)) from exc
    icfg = raw.get("integrator", {})
    try:
        integ = linsys.IntegratorConfig(
            rel_tol=float(icfg.get("rel_tol", 1e-9)), abs_tol=float(icfg.get("abs_tol", 1e-12)),
            max_step=float(icfg.get("max_step", math.inf)), max_steps=int(icfg.get("max_steps", 200000)),
            use_oracle=bool(icfg.get("use_oracle", False)))
    except (ValueError, TypeError) as exc:
        raise ConfigError("integrator", str(exc)) from exc
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and 0 <= seed < 2 ** 64, "seed", "seed must be an unsigned 64-bit integer")
    tol = _number(raw.get("tolerance", 1e-6), "tolerance")
    _require(tol >= 0, "tolerance", "tolerance must be nonnegative")
    checks = raw.get("checks", [])
    _require(isinstance(checks, list), "checks", "expected a list")
    parsed = [_validate_check(c, k, g, system.n) for k, c in enumerate(checks)]
    names = [c["name"] for c in parsed]
    for k, c in enumerate(parsed):
        if names.count(c["name"]) > 1:
            c["name"] = f"{c['name']}#{k}"
    out = raw.get("output", {})
    raw["schema_version"] = SCHEMA_VERSION
    return AnalysisConfig(raw, g, system, (lo, hi), pts, strategy, integ, seed, tol, parsed,
                          out.get("report", "report.json"), out.get("plot_dir"))


def _read_config_text(source: str) -> str:
    p = Path(source)
    if p.exists():
        return p.read_text()
    if source in BUNDLED:
        return resources.files("dichoscope").joinpath("data", source).read_text()
    raise ConfigError("<path>", f"config file not found: {source}")


# --------------------------------------------------------------------------
# running checks

@dataclass
class CheckOutcome:
    name: str
    type: str
    passed: bool
    result: dict
    samples: dict = field(default_factory=dict)  # plot data, kept out of the JSON report


def _projector(cfg, chk):
    t0 = chk.get("t0", float(cfg.grid[0]))
    return dichotomy.constant_projector(chk["projector"], t0)


def _tol(cfg, chk):
    return float(chk.get("tol", cfg.tolerance))


def _run_check(cfg: AnalysisConfig, chk: dict) -> CheckOutcome:
    g, s, pts, ic = cfg.rate, cfg.system, cfg.grid, cfg.integrator
    ctype, tol = chk["type"], _tol(cfg, chk)
    samples = {}
    extra = {}

    if ctype == "group_suite":
        sample = growth.default_sample(g, int(chk.get("size", 100)))
        rep = growth.group_property_suite(g, sample, tol=chk.get("tol", 1e-9))
    elif ctype == "oracle":
        rep = linsys.oracle_agreement(s, pts, ic, tol)
    elif ctype == "cocycle":
        sub = pts[:: max(1, len(pts) // int(chk.get("points", 10)))]
        rep = linsys.cocycle_check(s, sub, ic, tol)
    elif ctype == "dichotomy":
        proj = _projector(cfg, chk)
        terms = dichotomy.dichotomy_terms(s, g, proj, pts, ic)
        rep, cert = dichotomy.verify_h_dichotomy(s, g, proj, chk["K"], chk["alpha"], pts, ic, tol)
        extra["certificate"] = cert.to_dict()
        bound = chk["K"] * np.exp(-chk["alpha"] * terms.logr)
        samples["bound_vs_value"] = {"t": terms.t, "s": terms.s, "block": terms.block,
                                     "value": terms.lhs, "bound": bound}
    elif ctype == "invariance":
        rep = dichotomy.invariance_residual(s, _projector(cfg, chk), pts, ic, tol)
    elif ctype == "estimate_constants":
        proj = _projector(cfg, chk)
        terms = dichotomy.dichotomy_terms(s, g, proj, pts, ic)
        curve = dichotomy.estimate_constants(s, g, proj, pts, chk["alphas"], ic,
                                             chk.get("K_cap", 1e6), terms=terms)
        sharp = dichotomy.sharp_alpha(terms)
        monotone = bool(np.all(np.diff(curve.Ks) >= 0))
        rep = CheckReport("estimate_constants", monotone, 0.0 if monotone else 1.0, 0.0, [],
                          {"sharp_alpha": sharp})
        extra["curve"] = curve.to_dict()
        samples["alpha_K"] = {"alpha": curve.alphas, "K": curve.Ks}
    elif ctype == "split":
        x0 = np.array(chk.get("x0", np.ones(s.n)), dtype=float)
        t0 = chk.get("t0", float(pts[0]))
        xp, xm, full = dichotomy.split_solution(s, _projector(cfg, chk), x0, t0, pts, ic)
        gap = float(np.max(np.abs(xp + xm - full) / np.maximum(1.0, np.abs(full))))
        rep = CheckReport("split_solution", gap <= 1e-9, gap, 1e-9, [], {"x0": x0})
    elif ctype == "elc":
        t0 = chk.get("t0", float(pts[0]))
        rep = dichotomy.check_elc(s, g, chk["projector"], t0, chk["K1"], chk["K2"], chk["M"],
                                  chk["alpha"], pts, ic, tol, seed=cfg.seed)
        extra["reconstructed_K"] = dichotomy.elc_reconstruct(chk["K1"], chk["K2"], chk["M"])
    elif ctype == "extend":
        sub = growth.log_h_grid(g, chk["T1"], cfg.interval[1], len(pts)).array()
        proj = _projector(cfg, {**chk, "t0": chk.get("t0", float(chk["T1"]))})
        rep0, cert = dichotomy.verify_h_dichotomy(s, g, proj, chk["K"], chk["alpha"], sub, ic, tol)
        if not rep0.passed:
            rep = rep0
        else:
            new, rep, N = dichotomy.extend_from_subinterval(cert, s, g, ic)
            extra["certificate"] = new.to_dict()
    elif ctype == "growth_definition":
        rep = growth_bounds.check_definition(s, g, chk["kind"], chk["T"], chk["C_T"], pts, ic, tol)
        extra["round_trip"] = growth_bounds.round_trip_report(g, chk["T"], chk["C_T"])
    elif ctype == "matrix_bound":
        rep = growth_bounds.check_matrix_bound(s, g, chk["kind"], chk["K0"], chk["beta"], pts, ic, tol)
    elif ctype == "alpha_beta":
        terms = dichotomy.dichotomy_terms(s, g, _projector(cfg, chk), pts, ic)
        a = dichotomy.sharp_alpha(terms)
        b = growth_bounds.sharp_beta(s, g, pts, ic)
        rep = growth_bounds.alpha_leq_beta_check(a, b, chk.get("tol", 1e-3))
    elif ctype == "noncritical":
        rep, cert = criteria.check_noncritical(s, g, chk["T"], chk["theta"], None, pts, ic, tol,
                                               int(chk.get("ball_points", criteria.BALL_POINTS)),
                                               seed=cfg.seed)
        extra["certificate"] = cert.to_dict()
    elif ctype == "theta_curve":
        curve = criteria.theta_curve(s, g, chk["T_values"], None, pts, ic, seed=cfg.seed)
        rep = CheckReport("theta_curve", True, 0.0, 0.0, [], {})
        extra["curve"] = [{"T": T, "theta": th} for T, th in curve]
        samples["theta_T"] = {"T": [c[0] for c in curve], "theta": [c[1] for c in curve]}
    elif ctype == "expansive":
        rep, cert = criteria.check_expansive(s, g, chk["L"], chk["beta"], chk.get("intervals"), pts,
                                             ic, tol, seed=cfg.seed)
        extra["certificate"] = cert.to_dict()
    elif ctype == "pipeline":
        return _run_pipeline(cfg, chk)
    elif ctype == "classify":
        cls = criteria.classify_solutions(s, g, chk.get("horizon"), chk.get("threshold", 10.0),
                                          None, ic, cfg.seed)
        rep = CheckReport("classify_solutions", True, 0.0, 0.0, [], {})
        extra["classification"] = cls.to_dict()
    else:  # pragma: no cover - guarded by validation
        raise ConfigError(f"checks.{chk['name']}.type", f"unknown check type {ctype!r}")

    result = {"report": rep.to_dict(), **jsonable(extra)}
    return CheckOutcome(chk["name"], ctype, rep.passed, result, samples)


def _run_pipeline(cfg, chk) -> CheckOutcome:
    """dichotomy -> expansiveness -> noncriticality -> dichotomy, checking each stage."""
    g, s, pts, ic = cfg.rate, cfg.system, cfg.grid, cfg.integrator
    tol = _tol(cfg, chk)
    proj = _projector(cfg, chk)
    stages = []
    rep, cert = dichotomy.verify_h_dichotomy(s, g, proj, chk["K"], chk["alpha"], pts, ic, tol)
    stages.append({"stage": "dichotomy", "constants": {"K": chk["K"], "alpha": chk["alpha"]},
                   "source": "input", "report": rep.to_dict()})
    ex = criteria.pipeline_dich_to_expansive(cert)
    rep_e, _ = criteria.check_expansive(s, g, ex.L, ex.beta, None, pts, ic, tol, seed=cfg.seed)
    stages.append({"stage": "expansive", "constants": {"L": ex.L, "beta": ex.beta},
                   "source": "L = K, beta = alpha", "report": rep_e.to_dict()})
    T, theta = criteria.pipeline_expansive_to_noncritical(g, ex.L, ex.beta, chk.get("theta_target", 0.5))
    rep_n, _ = criteria.check_noncritical(s, g, T, theta, None, pts, ic, tol, seed=cfg.seed)
    stages.append({"stage": "noncritical", "constants": {"T": T, "h(T)": float(g.hv(T)), "theta": theta},
                   "source": "theta = 2 L h(T)^-beta", "report": rep_n.to_dict()})
    theta_m = criteria.estimate_theta(s, g, T, None, pts, ic, seed=cfg.seed)
    C_T = growth_bounds.estimate_C_T(s, g, "both", T, pts, ic)
    K2, a2 = criteria.pipeline_noncritical_to_dich(g, T, theta_m, C_T)
    rep_d, _ = dichotomy.verify_h_dichotomy(s, g, proj, K2, a2, pts, ic, tol)
    sharp = dichotomy.sharp_alpha(dichotomy.dichotomy_terms(s, g, proj, pts, ic))
    stages.append({"stage": "dichotomy_from_noncritical",
                   "constants": {"theta_measured": theta_m, "C_T": C_T, "K": K2, "alpha": a2,
                                 "sharp_alpha": sharp},
                   "source": "K = C_T / theta, alpha = -ln(theta) / ln h(T)", "report": rep_d.to_dict()})
    conservative = a2 <= sharp + 1e-3
    ok = all(st["report"]["pass"] for st in stages) and conservative
    result = {"report": CheckReport("pipeline", ok, 0.0 if ok else 1.0, 0.0, [],
                                    {"alpha_conservative": conservative}).to_dict(),
              "stages": jsonable(stages)}
    return CheckOutcome(chk["name"], "pipeline", ok, result)


@dataclass
class Report:
    config: dict
    outcomes: list
    timings: dict

    @property
    def passed(self):
        return all(o.passed for o in self.outcomes)

    def to_dict(self, with_timings=True):
        out = {
            "schema_version": SCHEMA_VERSION,
            "toolkit_version": __version__,
            "config": jsonable(self.config),
            "all_passed": self.passed,
            "checks": [{"name": o.name, "type": o.type, "pass": o.passed, **o.result}
                       for o in self.outcomes],
        }
        if with_timings:
            out["timings"] = self.timings
        return out

    def dumps(self, with_timings=True) -> str:
        return json.dumps(self.to_dict(with_timings), indent=2) + "\n"


def run_checks(cfg: AnalysisConfig, only: Optional[set] = None, threads: int = 1) -> Report:
    """Run the selected checks; results keep declaration order regardless of threads."""
    chosen = [c for c in cfg.checks if only is None or c["type"] in only]
    timings = {}

    def one(chk):
        t0 = time.perf_counter()
        log.info("running %s", chk["name"])
        out = _run_check(cfg, chk)
        timings[chk["name"]] = time.perf_counter() - t0
        return out

    if threads > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, chosen))
    else:
        outcomes = [one(c) for c in chosen]
    ordered = {k: timings[k] for k in (c["name"] for c in chosen)}
    return Report(cfg.raw, outcomes, ordered)


# --------------------------------------------------------------------------
# plot data

def emit_plot_data(report: Report, path) -> list:
    """Write CSV curves from a report; returns the files written.

    ``alpha_K*.csv``: alpha,K.  ``theta_T*.csv``: T,theta.
    ``bound_vs_value_<check>.csv``: t,s,block,value,bound,ratio.
    """
    path = Path(path)
    written = []
    plan = []
    for o in report.outcomes:
        for kind, data in o.samples.items():
            plan.append((o.name, kind, data))
    if not plan:
        log.warning("report has no curves; no plot data written")
        return written
    path.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, kind, data in plan:
        counts[kind] = counts.get(kind, 0) + 1
    seen = {}
    for name, kind, data in plan:
        seen[kind] = seen.get(kind, 0) + 1
        if kind == "bound_vs_value":
            fname = f"bound_vs_value_{_slug(name)}.csv"
            header = ["t", "s", "block", "value", "bound", "ratio"]
            rows = zip(data["t"], data["s"], data["block"], data["value"], data["bound"],
                       np.asarray(data["value"]) / np.asarray(data["bound"]))
        elif kind == "alpha_K":
            fname = "alpha_K.csv" if counts[kind] == 1 else f"alpha_K_{_slug(name)}.csv"
            header = ["alpha", "K"]
            rows = zip(data["alpha"], data["K"])
        else:
            fname = "theta_T.csv" if counts[kind] == 1 else f"theta_T_{_slug(name)}.csv"
            header = ["T", "theta"]
            rows = zip(data["T"], data["theta"])
        target = path / fname
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        written.append(target)
    return written


def _slug(name):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def _cell(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    return repr(float(v))


# --------------------------------------------------------------------------
# entry point

def _build_parser():
    p = argparse.ArgumentParser(prog="dichoscope",
                                description="Numerical checks for h-dichotomies of linear systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (report and plot data)")
    common.add_argument("--threads", type=int, default=1, help="checks run concurrently (default 1)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--tol", type=float, help="override the default multiplicative tolerance")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("run", "run every check in a config"),
        ("estimate", "constant estimation curves only"),
        ("pipeline", "the dichotomy/expansive/noncritical pipeline checks"),
        ("bounds", "bounded growth checks only"),
        ("noncritical", "noncriticality checks only"),
        ("expansive", "expansiveness checks only"),
    ]:
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("config", help=f"config path or a bundled name ({', '.join(BUNDLED)})")
    gp = sub.add_parser("group-test", parents=[common], help="group law suite for a growth rate")
    gp.add_argument("rate", help="exp, identity, log1p, ged or ged:<gamma>")
    gp.add_argument("--size", type=int, default=100)
    return p


def _setup_logging():
    level = os.environ.get("DICHOSCOPE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "group-test":
            return _group_test(args)
        return _run_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_ERROR
    except (DichoscopeError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_ERROR


def _group_test(args):
    g = _rate(args.rate, "rate")
    rep = growth.group_property_suite(g, growth.default_sample(g, args.size),
                                      tol=args.tol if args.tol is not None else 1e-9)
    text = json.dumps({"schema_version": SCHEMA_VERSION, "rate": g.name, "report": rep.to_dict()}, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "group_test.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if rep.passed else EXIT_FAILED


def _run_command(args):
    overrides = {"seed": args.seed, "tolerance": args.tol}
    cfg = load_config(args.config, overrides)
    only = None if args.command == "run" else FAMILIES[args.command]
    report = run_checks(cfg, only, max(1, args.threads))
    if not report.outcomes:
        log.warning("no checks of the requested kind in the config")
    out_dir = Path(args.out) if args.out else None
    report_path = (out_dir / Path(cfg.report_path).name) if out_dir else Path(cfg.report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.dumps())
    plot_dir = out_dir / "plots" if out_dir else (Path(cfg.plot_dir) if cfg.plot_dir else None)
    if plot_dir is not None:
        emit_plot_data(report, plot_dir)
    for o in report.outcomes:
        print(f"{'PASS' if o.passed else 'FAIL'}  {o.name}")
        if not o.passed:
            for w in o.result.get("report", {}).get("witness", [])[:3]:
                print(f"      witness {w}")
    print(f"report: {report_path}")
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
