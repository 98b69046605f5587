"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines.
"""
import math
import time

import numpy as np
import pytest

from vmma import assembly
from vmma.analysis import field_norms, observed_rates, rate_fit, run_study
from vmma.function_space import BoxDomain, build_space, with_boundary
from vmma.nonlinear_solver import fixed_point_step, newton_solve, picard_iterate, seed_solution
from vmma.problem import builtin_problem, quadratic_problem

pytestmark = pytest.mark.acceptance

# test1a reference errors (eps -> (L2, H2)) from a fine-mesh C1 computation
TEST1A_REFERENCE = {
    0.1: (0.08043631, 3.071852861),
    0.05: (0.053925875, 2.657326288),
    0.025: (0.032202484, 2.270039867),
}
TEST1A_CASCADE = [0.75, 0.5, 0.1, 0.075, 0.05, 0.025, 0.0125, 0.005, 0.0025, 0.00125, 0.0005]


def report(number, title, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
    assert ok, f"criterion {number} ({title}) failed: {detail}"


@pytest.fixture(scope="module")
def test1a_cascade():
    t0 = time.perf_counter()
    records = run_study("test1", builtin_problem("test1a"), "spectral", eps=TEST1A_CASCADE)
    return records, time.perf_counter() - t0


def test_criterion_01_quadratic_exactness():
    t0 = time.perf_counter()
    p = quadratic_problem()
    axis = np.linspace(0, 1, 21)
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    worst_err, worst_iters = 0.0, 0
    for kind, order in [("spectral", 3), ("spectral", 6), ("hermite_fem", 4)]:
        space = build_space(kind, p.domain, order)
        for eps in (1.0, 0.1, 0.001):
            res = newton_solve(p, space, eps, seed_solution(p, space, eps))
            assert res.converged
            val, _, _ = space.evaluate(res.coeffs, pts)
            worst_err = max(worst_err, float(np.max(np.abs(val - p.exact.u(pts)))))
            worst_iters = max(worst_iters, res.iterations)
    elapsed = time.perf_counter() - t0
    report(1, "quadratic exactness", worst_err <= 1e-9 and worst_iters <= 8 and elapsed < 5,
           f"max error {worst_err:.2e}, max iterations {worst_iters}, {elapsed:.2f} s")


def test_criterion_02_test2a_spectral_capture():
    t0 = time.perf_counter()
    recs = run_study("test2", builtin_problem("test2a"), "spectral", orders=[4, 5, 6, 8, 10],
                     eps=0.001)
    elapsed = time.perf_counter() - t0
    by_n = {r.N: r for r in recs}
    captured = max(by_n[n].err_H2 for n in ("6", "8", "10"))
    coarse = [(by_n[n].err_L2, by_n[n].err_H1, by_n[n].err_H2) for n in ("4", "5")]
    positive = all(e > 0 for row in coarse for e in row)
    decreasing = all(a > b for a, b in zip(coarse[0], coarse[1]))
    ok = captured <= 1e-8 and positive and decreasing and elapsed < 10
    report(2, "test2a spectral capture", ok,
           f"max err_H2 for N>=6 {captured:.2e}; N=4 H2 {coarse[0][2]:.3g} > N=5 H2 "
           f"{coarse[1][2]:.3g}; {elapsed:.2f} s")


def test_criterion_03_test2b_spectral_decay():
    t0 = time.perf_counter()
    orders = [4, 6, 8, 10, 12]
    recs = run_study("test2", builtin_problem("test2b"), "spectral", orders=orders, eps=0.001)
    elapsed = time.perf_counter() - t0
    errs = [r.err_H2 for r in recs]
    ratios = []
    for a, b in zip(errs, errs[1:]):
        if a < 1e-11:
            break
        ratios.append(b / a)
    ok = bool(ratios) and max(ratios) <= 0.3 and elapsed < 30
    report(3, "test2b spectral decay", ok,
           f"err_H2 {', '.join(f'{e:.2e}' for e in errs)}; worst ratio {max(ratios):.3g}; "
           f"{elapsed:.2f} s")


def test_criterion_04_fem_h_rates():
    t0 = time.perf_counter()
    recs = run_study("test2", builtin_problem("test2a"), "hermite_fem", orders=[4, 8, 16, 32],
                     eps=0.001)
    elapsed = time.perf_counter() - t0
    hs = [r.h for r in recs]
    rates = {k: observed_rates(hs, [getattr(r, k) for r in recs])[-1]
             for k in ("err_H2", "err_H1", "err_L2")}
    target = {"err_H2": 2, "err_H1": 3, "err_L2": 4}
    ok = all(abs(rates[k] - target[k]) <= 0.4 for k in target) and elapsed < 180
    report(4, "FEM h-rates", ok,
           ", ".join(f"{k} {rates[k]:.3f} (want {target[k]})" for k in target)
           + f"; {elapsed:.1f} s")


def test_criterion_05_test1a_table(test1a_cascade):
    records, elapsed = test1a_cascade
    by_eps = {r.eps: r for r in records}
    worst = 0.0
    parts = []
    for eps, (l2, h2) in TEST1A_REFERENCE.items():
        r = by_eps[eps]
        dev = max(abs(r.err_L2 / l2 - 1), abs(r.err_H2 / h2 - 1))
        worst = max(worst, dev)
        parts.append(f"eps={eps}: L2 {r.err_L2:.6g}/{l2}, H2 {r.err_H2:.6g}/{h2}")
    ok = worst <= 0.10 and elapsed < 300
    report(5, "test1a reference errors", ok,
           "; ".join(parts) + f"; worst relative deviation {worst:.2%}; {elapsed:.1f} s")


def test_criterion_06_free_rate_fit(test1a_cascade):
    records, elapsed = test1a_cascade
    sel = [r for r in records if 0.0005 <= r.eps <= 0.05]
    a_h2 = rate_fit([(r.eps, r.err_H2) for r in sel]).alpha
    a_l2 = rate_fit([(r.eps, r.err_L2) for r in sel]).alpha
    ok = 0.20 <= a_h2 <= 0.30 and 0.75 <= a_l2 <= 1.10 and elapsed < 600
    report(6, "free log-log fit in eps", ok,
           f"alpha_H2 {a_h2:.4f} in [0.20, 0.30], alpha_L2 {a_l2:.4f} in [0.75, 1.10] "
           f"over {len(sel)} points")


def test_criterion_07_test3_coupling():
    t0 = time.perf_counter()
    p = builtin_problem("test3a")
    eps = [0.25, 0.0625, 0.015625]
    half = run_study("test3", p, "hermite_fem", eps=eps, gamma=0.5)
    full = run_study("test3", p, "hermite_fem", eps=eps, gamma=1)
    elapsed = time.perf_counter() - t0

    def rms(recs, key, alpha):
        return rate_fit([(r.eps, getattr(r, key)) for r in recs], "fixed_alpha", alpha).residual

    checks = {"L2 alpha=1, h=eps^1/2": rms(half, "err_L2", 1.0),
              "H2 alpha=1/4, h=eps^1/2": rms(half, "err_H2", 0.25),
              "H1 alpha=1/2, h=eps": rms(full, "err_H1", 0.5)}
    ok = all(v <= 0.2 for v in checks.values()) and elapsed < 600
    report(7, "test3 coupling fits", ok,
           ", ".join(f"{k}: rms {v:.3f}" for k, v in checks.items())
           + f" (limit 0.2); {elapsed:.1f} s")


def test_criterion_08_jacobian_is_minus_b():
    rng = np.random.default_rng(8)
    cases = [("spectral", 6, 2), ("spectral", 6, 3), ("hermite_fem", 4, 2)]
    worst = 0.0
    for kind, order, dim in cases:
        space = build_space(kind, BoxDomain.unit(dim), order)
        table = space.tabulate()
        for _ in range(10):
            u = rng.standard_normal(space.dof_count)
            eps = float(rng.uniform(1e-3, 1.0))
            J = assembly.assemble_jacobian(space, table, eps, u).dense()
            B = assembly.assemble_B_form(space, table, eps, u).dense()
            worst = max(worst, np.abs(J + B).max() / np.abs(B).max())
    report(8, "J = -B", worst <= 1e-10, f"max |J+B|/|B| {worst:.2e} over 30 states")


def test_criterion_09_fd_jacobian():
    rng = np.random.default_rng(9)
    p = builtin_problem("test1a")
    space = build_space("spectral", p.domain, 4)
    table = space.tabulate()
    eps = 0.1
    u = space.interpolate(p.exact.u) + 0.1 * rng.standard_normal(space.dof_count)
    J = assembly.assemble_jacobian(space, table, eps, u).dense()
    worst = 0.0
    for k, dof in enumerate(space.free_dofs):
        step = 1e-6 * (1 + abs(u[dof]))
        up, um = u.copy(), u.copy()
        up[dof] += step
        um[dof] -= step
        col = (assembly.assemble_residual(space, table, p, eps, up)
               - assembly.assemble_residual(space, table, p, eps, um)) / (2 * step)
        worst = max(worst, np.abs(col - J[:, k]).max() / np.abs(J[:, k]).max())
    report(9, "finite-difference Jacobian", worst <= 1e-6, f"max column deviation {worst:.2e}")


def test_criterion_10_fixed_point_map():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    p = builtin_problem("test1b")
    eps = 0.1
    space = build_space("spectral", p.domain, 6)
    table = space.tabulate()
    sol = newton_solve(p, space, eps, seed_solution(p, space, eps))
    assert sol.converged
    u = sol.coeffs

    def h2(c):
        return field_norms(space, c)[2]

    fixed = float(np.max(np.abs(fixed_point_step(space, table, eps, u, u, p) - u)))

    def perturbed():
        z = np.zeros_like(u)
        z[space.free_dofs] = rng.standard_normal(len(space.free_dofs))
        return u + 0.005 * rng.uniform(0.1, 1.0) * z / h2(z)

    ratio = 0.0
    for _ in range(10):
        v, w = perturbed(), perturbed()
        tv = fixed_point_step(space, table, eps, u, v, p)
        tw = fixed_point_step(space, table, eps, u, w, p)
        ratio = max(ratio, h2(tv - tw) / h2(v - w))

    start = with_boundary(space, space.interpolate(p.exact.u),
                          space.boundary_lift(p.g, p.g_grad))
    pic = picard_iterate(p, space, eps, start, reference_u=u)
    gap = h2(pic.coeffs - u)
    elapsed = time.perf_counter() - t0
    ok = fixed <= 1e-10 and ratio < 1 and pic.converged and gap <= 1e-8 and elapsed < 30
    report(10, "fixed-point map", ok,
           f"|T(u)-u| {fixed:.2e}, contraction {ratio:.3g}, Picard-Newton H2 gap {gap:.2e} "
           f"after {pic.iterations} iterations; {elapsed:.2f} s")


def test_criterion_11_scaled_h2_bound(test1a_cascade):
    records, _ = test1a_cascade
    sel = [r for r in records if 0.005 <= r.eps <= 0.75]
    scaled = {r.eps: math.sqrt(r.eps) * r.h2_norm for r in sel}
    bound = 2 * scaled[0.75]
    worst = max(scaled.values())
    report(11, "sqrt(eps)*||u_h||_H2 bounded", worst <= bound,
           f"max {worst:.4g} vs bound {bound:.4g} over {len(sel)} eps values")
