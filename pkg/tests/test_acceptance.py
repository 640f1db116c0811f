"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` (the lines are printed even
without ``-s``, through the terminal reporter).
"""

import json
import random
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from conftest import random_poly_system
from oracles import heisenberg_law
from test_lifting import oracle_verdict
from hormander.approx import (
    box_grid,
    geometric_probes,
    holder_exponent_estimate,
    jacobian_check,
    order_table,
    remainder_field,
    theta_jacobian,
    unit_directions,
)
from hormander.builtins import abelian, builtin, grushin, heisenberg, kolmogorov, perturbed_heisenberg
from hormander.cli import main
from hormander.expr import Var, free_variables, simplify
from hormander.geom import ChartFactory, make_chart
from hormander.liealg import (
    bch_product,
    group_structure,
    group_system,
    left_invariant_field,
)
from hormander.lifting import lift
from hormander.metrics import cc_distance_upper, fit_reports
from hormander.vf import a_matrix, bracket, combination_field, multiindices, nested_bracket

RADII = [0.05, 0.1, 0.2, 0.4]
BUILTINS = ["abelian(3)", "heisenberg", "grushin", "kolmogorov", "perturbed-heisenberg",
            "perturbed-heisenberg(0.5)"]


@pytest.fixture
def verdict(request):
    """Print ``criterion N: PASS|FAIL (details)`` and fail the test on FAIL."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert ok, line

    return emit


def chart_mode(s):
    return "smooth" if s.alpha == 1 else "regularized"


# 1 ------------------------------------------------------------------------


def test_criterion_1_algebraic_exactness(verdict):
    t0 = time.perf_counter()
    bad = 0
    for seed in range(50):
        rng = random.Random(1000 + seed)
        s = random_poly_system(1000 + seed, p=rng.randint(1, 4), n=2, degree=3, drift=True)
        X, Y, Z = s.fields[0], s.fields[1], s.drift
        bad += not (bracket(X, Y) + bracket(Y, X)).is_zero()
        bad += not (bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y))).is_zero()
    cases = [(n, w0, r) for n in (1, 2, 3) for w0 in (False, True) for r in (2, 3, 4)
             if not (n == 1 and not w0)]
    rng = random.Random(7)
    assoc_bad = 0
    for k in range(200):
        g = group_structure(*cases[k % len(cases)])
        u, v, w = ([Fraction(rng.randint(-9, 9), rng.randint(1, 7)) for _ in range(g.p)] for _ in range(3))
        assoc_bad += bch_product(g, bch_product(g, u, v), w) != bch_product(g, u, bch_product(g, v, w))
    dt = time.perf_counter() - t0
    verdict(1, bad == 0 and assoc_bad == 0 and dt < 60,
            f"bracket failures {bad}/100, associativity failures {assoc_bad}/200, {dt:.1f}s")


# 2 ------------------------------------------------------------------------


def test_criterion_2_a_matrix_soundness(verdict):
    t0 = time.perf_counter()
    checked = failures = 0
    kernels = {}
    for seed in range(20):
        s = random_poly_system(2000 + seed, n=2, degree=3, r=3)
        key = (s.n, s.with_x0)
        if key not in kernels:
            Is = multiindices(s.n, s.with_x0, s.r)
            A = a_matrix(s.r, s.n, s.with_x0)
            words = sorted({w for I in Is for w in A[I]})
            M = sp.Matrix([[A[I].get(w, 0) for w in words] for I in Is])
            kernels[key] = (Is, M.T.nullspace())
        Is, kernel = kernels[key]
        for a in kernel:
            coeffs = {I: Fraction(int(c.p), int(c.q)) for I, c in zip(Is, a) if c != 0}
            checked += 1
            failures += not combination_field(s, coeffs).is_zero()
    dt = time.perf_counter() - t0
    verdict(2, failures == 0 and checked > 0 and dt < 30,
            f"{checked} certificates on 20 systems, {failures} nonzero, {dt:.1f}s")


# 3 ------------------------------------------------------------------------


def test_criterion_3_lifting(verdict):
    t0 = time.perf_counter()
    details, ok = [], True
    for name, make in [("grushin", grushin), ("kolmogorov", kolmogorov)]:
        sys0 = make()
        res = lift(sys0, [0, 0])
        free, span = oracle_verdict(res.system, [0, 0, 0])
        proj = all(
            str(a) == str(b)
            for I in multiindices(sys0.n, sys0.with_x0, sys0.r)
            for a, b in zip(nested_bracket(sys0, I).coeffs, nested_bracket(res.system, I).coeffs[: sys0.p])
        )
        tri = all(v < sys0.p + k for k, st in enumerate(res.steps) for u in st.polynomials
                  for v in free_variables(u))
        good = res.m == 1 and res.system.p == 3 and free and span == 3 and proj and tri
        ok &= good
        details.append(f"{name}: m={res.m} free={free} span={span} projection={proj} triangular={tri}")
    dt = time.perf_counter() - t0
    verdict(3, ok and dt < 30, "; ".join(details) + f", {dt:.1f}s")


# 4 ------------------------------------------------------------------------


def test_criterion_4_group_construction(verdict):
    g = group_structure(2, False, 2)
    rng = random.Random(4)
    law_ok = True
    for _ in range(60):
        u = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(3)]
        v = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(3)]
        want = heisenberg_law([sp.Rational(x.numerator, x.denominator) for x in u],
                              [sp.Rational(x.numerator, x.denominator) for x in v])
        law_ok &= [sp.Rational(x.numerator, x.denominator) for x in bch_product(g, u, v)] == want
    unit_ok = euler_ok = struct_ok = True
    for case in [(2, False, 2), (2, False, 3), (1, True, 3), (3, False, 2), (2, False, 4)]:
        gc = group_structure(*case)
        Ys = [left_invariant_field(gc, I) for I in gc.basis.elements]
        zero = [Fraction(0)] * gc.p
        for k, Y in enumerate(Ys):
            unit_ok &= list(Y.evaluate(zero)) == [int(j == k) for j in range(gc.p)]
        for k in range(gc.p):
            total = Var(0) * 0
            for j, Y in enumerate(Ys):
                total = total + Var(j) * Y.coeffs[k]
            euler_ok &= simplify(total - Var(k)) == simplify(Var(0) * 0)
        for a in range(gc.p):
            for b in range(gc.p):
                diff = bracket(Ys[a], Ys[b])
                for k, c in gc.structure.get((a, b), {}).items():
                    diff = diff + Ys[k].scaled(-c)
                struct_ok &= diff.is_zero()
    verdict(4, law_ok and unit_ok and euler_ok and struct_ok,
            f"closed form {law_ok}, Y_I(0)=e_I {unit_ok}, Euler {euler_ok}, structure constants {struct_ok}")


# 5 ------------------------------------------------------------------------


def test_criterion_5_chart_round_trip(verdict):
    worst_rt = worst_anti = 0.0
    for k, name in enumerate(BUILTINS):
        s = builtin(name)
        fac = ChartFactory(s, chart_mode(s))
        ch = fac.chart(np.zeros(s.p))
        R = ch.validity_radius() / 2
        w = np.array(ch.weights, dtype=float)
        U = np.random.default_rng(50 + k).uniform(-1, 1, size=(100, s.p)) * R**w
        X = ch.exp_flow(U)
        Ub, ok = ch.theta_batch(X)
        worst_rt = max(worst_rt, float(np.max(np.abs(Ub - U))) if ok.all() else np.inf)
        if fac.mode == "smooth":
            back, ok2 = fac.theta_many(X, np.broadcast_to(ch.xbar, X.shape))
            worst_anti = max(worst_anti, float(np.max(np.abs(back + U))) if ok2.all() else np.inf)
    h = make_chart(heisenberg(), [0.0] * 3)
    U = np.random.default_rng(5).uniform(-1, 1, size=(100, 3)) * np.array([0.5, 0.5, 0.25])
    heis_err = float(np.max(np.abs(h.exp_flow(U) - U)))
    verdict(5, worst_rt <= 1e-8 and worst_anti <= 1e-7 and heis_err <= 1e-10,
            f"round trip {worst_rt:.1e}, antisymmetry {worst_anti:.1e}, Heisenberg E(u,0)-u {heis_err:.1e}")


# 6 ------------------------------------------------------------------------


def test_criterion_6_homogeneous_dimension(verdict):
    t0 = time.perf_counter()
    targets = [("abelian R^3", abelian(3), 3, 0.05, 100_000),
               ("Heisenberg", heisenberg(), 4, 0.15, 100_000),
               ("lifted Kolmogorov", lift(kolmogorov(), [0, 0]).system, 6, 0.2, 400_000)]
    ok, details = True, []
    for label, s, Q, tol, samples in targets:
        fac = ChartFactory(s, "smooth")
        rep = fit_reports(fac, np.zeros(s.p), RADII, samples, seed=6, pairs=0)
        ratios = [d["ratio"] / d["expected"] for d in rep.doubling]
        good = rep.Q_expected == Q and abs(rep.Q_hat - Q) <= tol and all(abs(r - 1) <= 0.15 for r in ratios)
        ok &= good
        details.append(f"{label}: Q={rep.Q_hat:.3f} (±{tol}), doubling/2^Q in "
                       f"[{min(ratios):.3f}, {max(ratios):.3f}]")
    dt = time.perf_counter() - t0
    verdict(6, ok and dt < 300, "; ".join(details) + f", {dt:.0f}s")


# 7 ------------------------------------------------------------------------


def test_criterion_7_distance_equivalence(verdict):
    ok, details = True, []
    for label, s in [("Heisenberg", heisenberg()), ("lifted Kolmogorov", lift(kolmogorov(), [0, 0]).system)]:
        fac = ChartFactory(s, "smooth")
        rep = fit_reports(fac, np.zeros(s.p), [0.1, 0.2], 4096, seed=7, pairs=200, triples=200)
        c1, c2 = rep.fefferman_phong
        lo, hi = rep.rho_over_d
        good = 0 < lo <= hi and hi / lo <= 20 and 0 < c1 and np.isfinite(c2)
        if label == "Heisenberg":
            good &= rep.quasi_triangle <= 3
        ok &= good
        details.append(f"{label}: rho/d in [{lo:.2f}, {hi:.2f}] ratio {hi / lo:.1f}, c1={c1:.3f}, c2={c2:.3f}, "
                       f"quasi-triangle {rep.quasi_triangle:.2f}")
    # a few pairs with two-segment controls: the bound can only improve
    fac = ChartFactory(heisenberg(), "smooth")
    rng = np.random.default_rng(77)
    mono = True
    for _ in range(3):
        y = rng.uniform(-1, 1, 3) * np.array([0.2, 0.2, 0.04])
        d1 = cc_distance_upper(fac, np.zeros(3), y, segments=1).value
        d2 = cc_distance_upper(fac, np.zeros(3), y, segments=2, bisections=5).value
        mono &= d2 <= d1 + 1e-12
    ok &= mono
    verdict(7, ok, "; ".join(details) + f"; N=2 bound <= N=1 bound on 3 pairs: {mono}")


# 8 ------------------------------------------------------------------------


def test_criterion_8_approximation_orders(verdict):
    g = group_structure(2, False, 2)
    dirs = unit_directions(g, 4, 8)
    smooth = order_table(make_chart(perturbed_heisenberg(), [0.0] * 3), g, dirs)
    rough = order_table(make_chart(perturbed_heisenberg(Fraction(1, 2)), [0.0] * 3, "regularized"), g, dirs)
    gs = make_chart(group_system(g, region=((-2.0,) * 3, (2.0,) * 3)), [0.0] * 3)
    U = np.array([0.5**k * d for d in dirs for k in range(2, 8)])
    vanish = max(float(np.max(np.abs(remainder_field(gs, g, I, U)))) for I in g.basis.elements)

    def worst(rows):
        s = [r.slope - r.floor for r in rows if r.slope is not None]
        return min(s) if s else float("inf")

    ok = all(r.passed for r in smooth) and all(r.passed for r in rough) and vanish <= 1e-9
    verdict(8, ok, f"smooth {sum(r.passed for r in smooth)}/{len(smooth)} (min slope-floor {worst(smooth):.2f}), "
                   f"alpha=0.5 {sum(r.passed for r in rough)}/{len(rough)} (min slope-floor {worst(rough):.2f}), "
                   f"group remainder {vanish:.1e}")


# 9 ------------------------------------------------------------------------


def test_criterion_9_holder_dependence(verdict):
    s = perturbed_heisenberg(Fraction(1, 2))
    fac = ChartFactory(s, "regularized")
    x0 = np.array([0.1, 0.1, 0.1])
    probes = geometric_probes(np.zeros(3), np.eye(3)[0])
    h1 = holder_exponent_estimate(lambda b: fac.chart(b).theta(x0), probes)
    h2 = holder_exponent_estimate(lambda b: theta_jacobian(fac.chart(b), x0).ravel(), probes)

    def good(h):
        return h.exact or h.exponent >= 0.4

    verdict(9, good(h1) and good(h2),
            f"Theta exponent {h1.exponent if h1.exponent is None else round(h1.exponent, 3)}, "
            f"Theta-Jacobian exponent {h2.exponent if h2.exponent is None else round(h2.exponent, 3)}")


# 10 -----------------------------------------------------------------------


def test_criterion_10_jacobian_density(verdict):
    ok, details = True, []
    for name in BUILTINS:
        s = builtin(name)
        ch = make_chart(s, [0.0] * s.p, chart_mode(s))
        rep = jacobian_check(ch, box_grid(ch, ch.validity_radius() / 2))
        good = np.isfinite(rep.K) and rep.product_error <= 1e-7
        if name.startswith("abelian"):
            good &= rep.max_deviation == 0
        ok &= good
        details.append(f"{name}: K={rep.K:.2g} |cJ-1|={rep.product_error:.1e}")
    verdict(10, ok, "; ".join(details))


# 11 -----------------------------------------------------------------------


def test_criterion_11_reproducibility(verdict, tmp_path):
    cfg = {"system": "heisenberg", "seed": 11, "samples": 20000, "radii": [0.1, 0.2, 0.4], "pairs": 20}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for k, workers in enumerate([1, 1, 3]):
        out = tmp_path / f"run{k}"
        code = main(["report", "--config", str(path), "--out", str(out), "--workers", str(workers)])
        outs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
    same = outs[0][1] == outs[1][1] == outs[2][1]
    verdict(11, same and all(c == 0 for c, _ in outs),
            f"{len(outs[0][1])} artifacts byte-identical across 2 runs and worker counts 1/3: {same}")
