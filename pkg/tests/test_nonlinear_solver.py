import numpy as np
import pytest

from vmma import assembly
from vmma.analysis import error_norms, field_norms
from vmma.function_space import BoxDomain, build_space, with_boundary
from vmma.nonlinear_solver import (SolverOptions, convexity_diagnostic, epsilon_cascade,
                                   fixed_point_step, min_eigenvalues, newton_solve,
                                   picard_iterate, seed_solution)
from vmma.problem import builtin_problem, quadratic_problem

UNIT = BoxDomain.unit(2)
SAMPLE = np.stack(np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5), indexing="ij"),
                  axis=-1).reshape(-1, 2)


def test_quadratic_from_zero_interior():
    p = quadratic_problem()
    s = build_space("spectral", UNIT, 4)
    start = s.boundary_lift(p.g, p.g_grad)
    res = newton_solve(p, s, 0.1, start)
    assert res.converged and res.iterations <= 8
    assert res.residual_history[-1] <= 1e-10
    v, _, _ = s.evaluate(res.coeffs, SAMPLE)
    assert np.max(np.abs(v - p.exact.u(SAMPLE))) <= 1e-9
    np.testing.assert_array_equal(res.coeffs[s.constrained_dofs], start[s.constrained_dofs])


def test_quadratic_3d():
    p = quadratic_problem(3)
    s = build_space("spectral", p.domain, 3)
    res = newton_solve(p, s, 0.1, seed_solution(p, s, 0.1))
    assert res.converged
    assert error_norms(s, res.coeffs, p.exact)[2] <= 1e-10
    assert abs(res.min_hessian_eigenvalue - 1) <= 1e-9


def test_test2a_captured_at_n8():
    p = builtin_problem("test2a")
    s = build_space("spectral", UNIT, 8)
    res = newton_solve(p, s, 0.001, s.interpolate(p.exact.u))
    assert res.converged
    assert error_norms(s, res.coeffs, p.exact)[2] <= 1e-8


def test_restart_from_solution_takes_one_step():
    p = builtin_problem("test1b")
    s = build_space("spectral", UNIT, 8)
    first = newton_solve(p, s, 0.1, seed_solution(p, s, 0.1))
    again = newton_solve(p, s, 0.1, first.coeffs)
    assert again.iterations == 1
    assert np.max(np.abs(again.coeffs - first.coeffs)) <= 1e-12


def test_nonconvergence_is_reported():
    p = builtin_problem("test1a")
    s = build_space("spectral", UNIT, 8)
    res = newton_solve(p, s, 0.1, seed_solution(p, s, 0.1), SolverOptions(max_iters=1))
    assert not res.converged and res.message


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(newton_tol=0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)
    with pytest.raises(ValueError):
        SolverOptions(damping="armijo")


def test_cascade_matches_cold_start_and_is_no_slower():
    p = builtin_problem("test1a")
    s = build_space("spectral", UNIT, 16)
    eps_list = [0.75, 0.5, 0.1, 0.05]
    cascade = epsilon_cascade(p, s, eps_list)
    for eps, res in cascade.items():
        cold = newton_solve(p, s, eps, seed_solution(p, s, eps))
        assert res.converged and cold.converged
        assert res.iterations <= cold.iterations
        assert field_norms(s, res.coeffs - cold.coeffs)[2] <= 1e-8


def test_single_entry_cascade_is_plain_newton():
    p = builtin_problem("test1b")
    s = build_space("spectral", UNIT, 6)
    a = epsilon_cascade(p, s, [0.2])[0.2]
    b = newton_solve(p, s, 0.2, seed_solution(p, s, 0.2))
    assert np.array_equal(a.coeffs, b.coeffs)


def test_cascade_marks_tail_skipped():
    p = builtin_problem("test1a")
    s = build_space("spectral", UNIT, 8)
    out = epsilon_cascade(p, s, [0.5, 0.1, 0.05], SolverOptions(max_iters=1))
    assert list(out) == [0.5, 0.1, 0.05]
    assert not out[0.5].converged
    assert all(out[e].message.startswith("skipped") and out[e].coeffs is None
               for e in (0.1, 0.05))


def test_cascade_rejects_bad_lists():
    p = builtin_problem("test1a")
    s = build_space("spectral", UNIT, 4)
    for bad in ([], [0.1, 0.2], [0.1, 0.1], [0.1, -0.1]):
        with pytest.raises(ValueError):
            epsilon_cascade(p, s, bad)


def test_fixed_point_map():
    p = builtin_problem("test1b")
    s = build_space("spectral", UNIT, 6)
    t = s.tabulate()
    u = newton_solve(p, s, 0.1, seed_solution(p, s, 0.1)).coeffs
    for mode in ("frozen", "quasi"):
        assert np.max(np.abs(fixed_point_step(s, t, 0.1, u, u, p, mode=mode) - u)) <= 1e-10
    start = with_boundary(s, s.interpolate(p.exact.u), s.boundary_lift(p.g, p.g_grad))
    stepped = fixed_point_step(s, t, 0.1, u, start, p)
    np.testing.assert_array_equal(stepped[s.constrained_dofs], start[s.constrained_dofs])
    for mode in ("frozen", "quasi"):
        pic = picard_iterate(p, s, 0.1, start, reference_u=u, mode=mode)
        assert pic.converged
        assert field_norms(s, pic.coeffs - u)[2] <= 1e-8
    with pytest.raises(ValueError):
        fixed_point_step(s, t, 0.1, u, u, p, mode="lagged")


def test_quasi_step_equals_newton_step():
    p = builtin_problem("test1a")
    s = build_space("spectral", UNIT, 6)
    t = s.tabulate()
    w = seed_solution(p, s, 0.1)
    r = assembly.assemble_residual(s, t, p, 0.1, w)
    B = assembly.assemble_B_form(s, t, 0.1, w).dense()
    expect = w.copy()
    expect[s.free_dofs] += np.linalg.solve(B, r)
    np.testing.assert_allclose(fixed_point_step(s, t, 0.1, None, w, p, mode="quasi"), expect,
                               atol=1e-10)


def test_convexity_diagnostic():
    s = build_space("spectral", UNIT, 4)
    quad = quadratic_problem()
    lam, _ = convexity_diagnostic(s, s.interpolate(quad.exact.u))
    assert abs(lam - 1) <= 1e-10
    saddle = s.interpolate(lambda x: x[:, 0] ** 2 - x[:, 1] ** 2)
    assert abs(convexity_diagnostic(s, saddle)[0] + 2) <= 1e-10
    quartic = builtin_problem("test1b").exact
    lam, where = convexity_diagnostic(s, s.interpolate(quartic.u), m=10)
    assert abs(lam - min(12 * where[0] ** 2, 2)) <= 1e-10 and lam > 0


def test_min_eigenvalues_against_numpy():
    rng = np.random.default_rng(11)
    for d in (2, 3):
        M = rng.standard_normal((50, d, d))
        H = M + np.swapaxes(M, 1, 2)
        np.testing.assert_allclose(min_eigenvalues(H), np.linalg.eigvalsh(H)[:, 0], atol=1e-12)
