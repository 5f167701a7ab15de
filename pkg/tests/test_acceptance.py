"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from dichoscope.cli import main
from dichoscope.criteria import (check_expansive, check_noncritical, estimate_theta, expansive_failure_ratio,
                                 pipeline_dich_to_expansive, pipeline_expansive_to_noncritical,
                                 pipeline_noncritical_to_dich)
from dichoscope.dichotomy import (constant_projector, dichotomy_terms, explicit_projector,
                                  extend_from_subinterval, invariance_residual, sharp_alpha, verify_h_dichotomy)
from dichoscope.errors import ParseError
from dichoscope.expr import BinOp, Call, Const, Neg, Var, parse, to_text
from dichoscope.growth import (BUILTIN_RATES, builtin_rate, default_sample, group_property_suite, log_h_grid,
                               star)
from dichoscope.growth_bounds import (check_definition, check_matrix_bound, def_to_matrix, estimate_C_T,
                                      matrix_to_def, sharp_beta)
from dichoscope.linsys import (LinearSystem, const_diag_system, oracle_agreement, paper_log_system,
                               paper_power_system, zero_system)

P_STABLE = np.diag([1.0, 0.0])
K_EPS = 1 + 1e-6
ALPHAS = (0.5, 1.0, 2.0)


def log_example(n=40):
    g = builtin_rate("log1p")
    return paper_log_system(), g, log_h_grid(g, math.e - 1, g.back(50.0), n).array()


def power_example(alpha, n=40):
    g = builtin_rate("identity")
    return paper_power_system(alpha), g, log_h_grid(g, 1.0, 50.0, n).array()


def examples():
    yield "ln(1+t)", (*log_example(), 1.0)
    for a in ALPHAS:
        yield f"t^{a}", (*power_example(a), a)


class Criterion:
    def __init__(self, number):
        self.number = number
        self.notes = []
        self.failures = []

    def expect(self, ok, label):
        if not ok:
            self.failures.append(label)
        return ok

    def note(self, text):
        self.notes.append(text)

    @property
    def passed(self):
        return not self.failures

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        info = "; ".join(self.failures if self.failures else self.notes)
        return f"CRITERION {self.number}: {status}  {info}"


def c1(c):
    t0 = time.perf_counter()
    sys_, g, grid = log_example()
    rep, cert = verify_h_dichotomy(sys_, g, constant_projector(P_STABLE, grid[0]), K_EPS, 1.0, grid, tol=1e-7)
    c.expect(rep.passed and cert.verified, f"dichotomy worst={rep.worst_violation:.3g}")
    orc = oracle_agreement(sys_, grid, tol=1e-6)
    c.expect(orc.passed, f"oracle gap {orc.worst_violation:.3g}")
    dt = time.perf_counter() - t0
    c.expect(dt < 5, f"runtime {dt:.2f}s >= 5s")
    c.note(f"worst={rep.worst_violation:.2e} oracle gap={orc.worst_violation:.2e} in {dt:.2f}s")


def c2(c):
    t0 = time.perf_counter()
    for a in ALPHAS:
        sys_, g, grid = power_example(a)
        rep, _ = verify_h_dichotomy(sys_, g, constant_projector(P_STABLE, grid[0]), K_EPS, a, grid, tol=1e-7)
        c.expect(rep.passed, f"alpha={a} worst={rep.worst_violation:.3g}")
        orc = oracle_agreement(sys_, grid, tol=1e-6)
        c.expect(orc.passed, f"alpha={a} oracle gap {orc.worst_violation:.3g}")
    dt = time.perf_counter() - t0
    c.expect(dt < 5, f"runtime {dt:.2f}s >= 5s")
    c.note(f"alpha in {ALPHAS} in {dt:.2f}s")


def c3(c):
    g = builtin_rate("exp")
    rng = np.random.default_rng(0)
    t, s = rng.uniform(-20, 20, (2, 100))
    gap = float(np.max(np.abs(star(g, t, s) - (t + s))))
    c.expect(gap <= 1e-12, f"star vs addition gap {gap:.3g}")
    grid = log_h_grid(g, 0.0, 10.0, 30).array()
    rep, _ = verify_h_dichotomy(const_diag_system([-1.0, 1.0]), g, constant_projector(P_STABLE, 0.0),
                                K_EPS, 1.0, grid, tol=1e-7)
    c.expect(rep.passed, f"dichotomy worst={rep.worst_violation:.3g}")
    c.note(f"addition gap={gap:.1e} dichotomy worst={rep.worst_violation:.1e}")


def c4(c):
    worst = []
    for name in BUILTIN_RATES:
        g = builtin_rate(name)
        rep = group_property_suite(g, default_sample(g, 100), tol=1e-9, max_power=40)
        c.expect(rep.passed, f"{name}: {rep.worst_violation:.3g} ({rep.witness[:1]})")
        worst.append(f"{name}={rep.worst_violation:.1e}")
    c.note("worst residuals " + " ".join(worst))


def c5(c):
    t0 = time.perf_counter()
    for label, (sys_, g, grid, a) in examples():
        proj = constant_projector(P_STABLE, grid[0])
        rep, cert = verify_h_dichotomy(sys_, g, proj, K_EPS, a, grid, tol=1e-7)
        c.expect(rep.passed, f"{label}: start dichotomy")
        ex = pipeline_dich_to_expansive(cert)
        rep_e, _ = check_expansive(sys_, g, ex.L, ex.beta, None, grid, tol=1e-7)
        c.expect(rep_e.passed, f"{label}: expansive worst={rep_e.worst_violation:.3g}")
        T, theta_t = pipeline_expansive_to_noncritical(g, ex.L, ex.beta, 0.5)
        rep_n, _ = check_noncritical(sys_, g, T, theta_t, None, grid, tol=1e-7)
        c.expect(rep_n.passed, f"{label}: noncritical worst={rep_n.worst_violation:.3g}")
        theta = estimate_theta(sys_, g, T, None, grid)
        C_T = estimate_C_T(sys_, g, "both", T, grid)
        K2, a2 = pipeline_noncritical_to_dich(g, T, theta, C_T)
        rep_d, _ = verify_h_dichotomy(sys_, g, proj, K2, a2, grid, tol=1e-7)
        c.expect(rep_d.passed, f"{label}: recovered dichotomy K'={K2:.4g} alpha'={a2:.4g}")
        sharp = sharp_alpha(dichotomy_terms(sys_, g, proj, grid))
        c.expect(a2 <= sharp + 1e-3, f"{label}: alpha'={a2:.4g} > sharp {sharp:.4g}")
        c.note(f"{label}: K'={K2:.3g} alpha'={a2:.3g}")
    dt = time.perf_counter() - t0
    c.expect(dt < 60, f"runtime {dt:.1f}s >= 60s")
    c.note(f"{dt:.1f}s")


def c6(c):
    for label, (sys_, g, grid, _) in examples():
        a = sharp_alpha(dichotomy_terms(sys_, g, constant_projector(P_STABLE, grid[0]), grid))
        b = sharp_beta(sys_, g, grid)
        c.expect(a <= b + 1e-3, f"{label}: alpha={a:.5g} beta={b:.5g}")
        c.note(f"{label}: alpha={a:.4f} beta={b:.4f}")


def c7(c):
    g = builtin_rate("exp")
    rng = np.random.default_rng(7)
    C = rng.uniform(1.0, 1e3, 1000)
    H = np.exp(rng.uniform(0.05, 30.0, 1000))
    worst = 0.0
    for C_T, hT in zip(C, H):
        T = math.log(hT)
        hT = math.exp(T)  # the rate's own value of h(T)
        K0, beta = def_to_matrix(g, T, C_T)
        worst = max(worst, abs(K0 - C_T) / C_T, abs(beta - math.log(C_T) / math.log(hT)) / max(beta, 1e-300))
        back = matrix_to_def(g, K0, beta, T)
        worst = max(worst, abs(back - K0 * hT ** beta) / back)
    c.expect(worst <= 1e-14, f"formula residual {worst:.3g}")
    for label, (sys_, g2, grid, a) in examples():
        grid = grid[:: 2]
        T = g2.back(3.0)
        C_T = estimate_C_T(sys_, g2, "both", T, grid) * (1 + 1e-9)
        c.expect(check_definition(sys_, g2, "both", T, C_T, grid).passed, f"{label}: definition")
        K0, beta = def_to_matrix(g2, T, C_T)
        c.expect(check_matrix_bound(sys_, g2, "both", K0, beta, grid, tol=1e-7).passed,
                 f"{label}: definition => matrix form")
        K0m = 1 + 1e-7
        c.expect(check_matrix_bound(sys_, g2, "both", K0m, a, grid, tol=1e-7).passed, f"{label}: matrix form")
        for TT in (g2.back(1.5), g2.back(4.0)):
            c.expect(check_definition(sys_, g2, "both", TT, matrix_to_def(g2, K0m, a, TT), grid, tol=1e-7).passed,
                     f"{label}: matrix form => definition at T={TT:.3g}")
    c.note(f"1000 random pairs, worst relative residual {worst:.1e}")


def _zero_prefix_system():
    def A(t):
        return np.zeros((2, 2)) if t <= 2.0 else np.diag([-1.0 / t, 1.0 / t])
    return LinearSystem("zero_prefix", 2, A, lo=0.0)


def c8(c):
    for label, (sys_, g, _, a) in examples():
        T1 = g.back(2.0)
        sub = log_h_grid(g, T1, g.back(50.0), 30).array()
        _, cert = verify_h_dichotomy(sys_, g, constant_projector(P_STABLE, T1), K_EPS, a, sub, tol=1e-7)
        new, rep, N = extend_from_subinterval(cert, sys_, g)
        expected = N * N * cert.K * 2.0 ** a
        c.expect(math.isclose(new.K, expected, rel_tol=1e-12), f"{label}: K mismatch")
        c.expect(rep.passed, f"{label}: extended worst={rep.worst_violation:.3g}")
        c.note(f"{label}: N={N:.4g} K~={new.K:.4g}")
    g = builtin_rate("identity")
    sub = log_h_grid(g, 2.0, 40.0, 15).array()
    _, cert = verify_h_dichotomy(_zero_prefix_system(), g, constant_projector(P_STABLE, 2.0), K_EPS, 1.0, sub)
    _, rep, N = extend_from_subinterval(cert, _zero_prefix_system(), g)
    c.expect(N == 1.0, f"zero prefix N={N!r}")
    c.expect(rep.passed, "zero prefix extension")


def c9(c):
    g = builtin_rate("exp")
    grid = log_h_grid(g, 0.0, 20.0, 30).array()
    sys0 = zero_system(2)
    for theta in [k / 10 for k in range(1, 10)]:
        rep, _ = check_noncritical(sys0, g, 1.0, theta, None, grid)
        c.expect(not rep.passed and rep.witness, f"zero system passed noncriticality at theta={theta}")
    for L in (1.0, 2.0):
        rep, _ = check_expansive(sys0, g, L, 1.0, None, grid)
        c.expect(not rep.passed and rep.witness, f"zero system passed expansiveness on the grid, L={L}")
        # 4L is the failure threshold for L = 1, beta = 1; in general it is (2L)^(2/beta)
        for ratio in (4 * L * 1.01, expansive_failure_ratio(L, 1.0) * 1.01):
            b = math.log(ratio)
            rep, _ = check_expansive(sys0, g, L, 1.0, [(0.0, b)], [0.0, b / 2, b])
            if L == 1.0 or ratio > expansive_failure_ratio(L, 1.0):
                c.expect(not rep.passed, f"no failure at ratio {ratio:.3g}, L={L}")
    fam = explicit_projector(lambda t: np.array([[1.0, math.sin(t)], [0.0, 0.0]]), "oblique, t-dependent",
                             probe=[0.0, 1.0, 2.0])
    rep = invariance_residual(const_diag_system([-1.0, 1.0]), fam, np.linspace(0.0, 3.0, 7))
    c.expect(not rep.passed and bool(rep.witness), "non-invariant family passed invariance")
    c.note(f"non-invariant residual {rep.worst_violation:.3g}, witness (t, s)={tuple(rep.witness[0][:2])}")


def _random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        return Var() if rng.random() < 0.5 else Const(float(rng.integers(0, 10)))
    kind = rng.integers(0, 3)
    if kind == 0:
        return Neg(_random_tree(rng, depth - 1))
    if kind == 1:
        return Call("sin", (_random_tree(rng, depth - 1),))
    op = "+-*/^"[rng.integers(0, 5)]
    return BinOp(op, _random_tree(rng, depth - 1), _random_tree(rng, depth - 1))


def c10(c):
    with tempfile.TemporaryDirectory() as tmp:
        texts = []
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            c.expect(main(["run", "paper_log.example", "--out", str(out), "--seed", "5"]) == 0, "exit 0")
            data = json.loads((out / "paper_log_report.json").read_text())
            data.pop("timings")
            texts.append(json.dumps(data, indent=2))
        c.expect(texts[0] == texts[1], "reports differ between identical runs")
        c.expect(main(["run", "zero_negative.example", "--out", str(Path(tmp) / "neg")]) == 2, "exit 2")
        bad = Path(tmp) / "bad.json"
        bad.write_text(json.dumps({"growth_rate": "exp", "system": "zero:2", "interval": [0, 5],
                                   "checks": [{"type": "noncritical", "T": 1, "theta": 1.5}]}))
        c.expect(main(["run", str(bad)]) == 1, "exit 1")
    c.expect(parse("1+2*3^2^2") == BinOp("+", Const(1.0), BinOp("*", Const(2.0), BinOp(
        "^", Const(3.0), BinOp("^", Const(2.0), Const(2.0))))), "precedence")
    rng = np.random.default_rng(10)
    for _ in range(500):
        tree = _random_tree(rng, 6)
        if parse(to_text(tree)) != tree:
            c.expect(False, f"round trip {to_text(tree)}")
            break
    for text, offset in (("1 +", 3), ("ln(t", 4), ("1 $ 2", 2), ("pow(t)", 5)):
        try:
            parse(text)
            c.expect(False, f"{text!r} parsed")
        except ParseError as exc:
            c.expect(exc.offset == offset, f"{text!r} offset {exc.offset} != {offset}")
    c.note("deterministic report, exit codes 0/2/1, parser precedence, 500 round trips and offsets")


CRITERIA = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10]


def run_criterion(number):
    crit = Criterion(number)
    try:
        CRITERIA[number - 1](crit)
    except Exception as exc:  # report crashes as failures
        crit.failures.append(f"{type(exc).__name__}: {exc}")
    return crit


@pytest.mark.parametrize("number", range(1, len(CRITERIA) + 1))
def test_criterion(number, capsys):
    crit = run_criterion(number)
    with capsys.disabled():
        print("\n" + crit.line())
    assert crit.passed, crit.line()


if __name__ == "__main__":
    results = [run_criterion(n) for n in range(1, len(CRITERIA) + 1)]
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
