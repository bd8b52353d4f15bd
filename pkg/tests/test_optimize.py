"""Smooth solver, proximal pieces, subgradient and splitting loops."""

import numpy as np
import pytest

from nsgpreg import (
    AdmmStop,
    L1Block,
    SmoothProblem,
    SubgradStop,
    admm_minimize,
    augmented_lagrangian_value,
    check_gradient,
    minimize_smooth,
    minimize_subgradient,
    soft_threshold,
)


def _quadratic(A, b):
    def objective(x):
        r = A @ x - b
        return float(0.5 * r @ r), A.T @ r

    return SmoothProblem(dim=A.shape[1], objective=objective)


def test_smooth_solver_exact_on_quadratic():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 6)) + np.eye(12, 6)
    b = rng.normal(size=12)
    res = minimize_smooth(_quadratic(A, b), np.zeros(6), tol_grad=1e-10, max_iters=200)
    want = np.linalg.lstsq(A, b, rcond=None)[0]
    assert res.converged
    np.testing.assert_allclose(res.x, want, rtol=0, atol=1e-8)


def test_smooth_solver_rosenbrock():
    def rosen(x):
        v = (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2
        g = np.array(
            [
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
                200.0 * (x[1] - x[0] ** 2),
            ]
        )
        return v, g

    res = minimize_smooth(
        SmoothProblem(2, rosen), np.array([-1.2, 1.0]), tol_grad=1e-9, max_iters=400
    )
    assert res.converged
    assert res.iterations <= 400
    np.testing.assert_allclose(res.x, [1.0, 1.0], rtol=0, atol=1e-6)


def test_smooth_solver_respects_bounds():
    def quad(x):
        return float((x[0] - 0.0) ** 2), np.array([2.0 * x[0]])

    problem = SmoothProblem(1, quad, lower=1.0, upper=5.0)
    res = minimize_smooth(problem, np.array([3.0]), tol_grad=1e-10)
    assert res.x[0] == pytest.approx(1.0, abs=1e-12)


def test_smooth_solver_rejects_non_finite_start():
    with pytest.raises(ValueError):
        minimize_smooth(SmoothProblem(1, lambda x: (np.nan, x)), np.array([0.0]))


def test_check_gradient_discriminates():
    good = _quadratic(np.eye(3) * 2.0, np.array([1.0, -1.0, 0.5]))

    def broken(x):
        v, g = good.objective(x)
        return v, g + 0.01

    x = np.array([0.3, -0.8, 1.1])
    assert check_gradient(good, x) < 1e-7
    assert check_gradient(SmoothProblem(3, broken), x) > 1e-3


def test_soft_threshold_frozen_values():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    np.testing.assert_array_equal(
        soft_threshold(np.array([-0.2, 0.0, 4.0]), 0.5), [0.0, 0.0, 3.5]
    )
    np.testing.assert_array_equal(soft_threshold(np.array([1.5, -2.0]), 0.0), [1.5, -2.0])


def test_soft_threshold_solves_scalar_prox():
    # soft_threshold(a, k) minimizes k|x| + (x - a)^2 / 2; verify against a
    # fine grid on a few instances
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = rng.uniform(-4.0, 4.0)
        k = rng.uniform(0.0, 2.0)
        got = soft_threshold(a, k)
        grid = np.linspace(-6.0, 6.0, 240001)
        vals = k * np.abs(grid) + 0.5 * (grid - a) ** 2
        assert abs(got - grid[np.argmin(vals)]) < 1e-4


def test_l1_block_adjoint_consistency():
    rng = np.random.default_rng(9)
    T = 6
    mat = np.eye(T) - np.eye(T, k=-1)
    block = L1Block("path", np.arange(2, 2 + T), lam=0.3, rho=2.0, mat=mat)
    x = rng.normal(size=2 + T + 3)
    w = rng.normal(size=T)
    lhs = float(block.apply(x) @ w)
    out = np.zeros_like(x)
    block.adjoint_into(w, out)
    rhs = float(x @ out)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    anchored = np.diff(np.concatenate([[0.0], x[2:2 + T]]))
    assert block.penalty(x) == pytest.approx(0.3 * np.abs(anchored).sum(), rel=1e-12)


def test_subgradient_descent_on_scalar_composite():
    # minimum of (x - 2)^2 + |x| sits at x = 1.5
    def smooth(x):
        return float((x[0] - 2.0) ** 2), np.array([2.0 * (x[0] - 2.0)])

    blocks = [L1Block("x", np.array([0]), lam=1.0)]
    x, best = minimize_subgradient(
        SmoothProblem(1, smooth), blocks, np.array([0.0]), SubgradStop(max_iters=4000)
    )
    assert x[0] == pytest.approx(1.5, abs=1e-3)
    assert best == pytest.approx(1.75, abs=1e-5)


def test_admm_matches_closed_form_lasso():
    # separable problem: 0.5||x - a||^2 + lam ||x||_1 has the shrinkage of a
    # as its exact solution
    a = np.array([3.0, -0.2, 0.9, -4.0])

    def smooth(x):
        return float(0.5 * np.dot(x - a, x - a)), x - a

    blocks = [L1Block("x", np.arange(4), lam=1.0, rho=2.0)]
    stop = AdmmStop(
        tol_primal=1e-8, tol_dual=1e-8, max_outer=500, inner_tol_grad=1e-10,
        inner_max_iters=200,
    )
    rec = admm_minimize(SmoothProblem(4, smooth), blocks, np.zeros(4), stop)
    assert rec.converged
    assert rec.lagrangian_monotone()
    np.testing.assert_allclose(rec.x, soft_threshold(a, 1.0), rtol=0, atol=1e-6)
    # residual history has one row per outer iteration, three columns
    assert rec.history.shape == (rec.iterations, 3)
    assert np.all(rec.history[:, 1] >= 0) and np.all(rec.history[:, 2] >= 0)


def test_admm_with_zero_weight_reduces_to_smooth_minimum():
    a = np.array([1.0, -2.0])

    def smooth(x):
        return float(0.5 * np.dot(x - a, x - a)), x - a

    blocks = [L1Block("x", np.arange(2), lam=0.0, rho=1.0)]
    stop = AdmmStop(tol_primal=1e-9, tol_dual=1e-9, max_outer=300,
                    inner_tol_grad=1e-11, inner_max_iters=100)
    rec = admm_minimize(SmoothProblem(2, smooth), blocks, np.zeros(2), stop)
    np.testing.assert_allclose(rec.x, a, rtol=0, atol=1e-7)


def test_augmented_lagrangian_value_composition():
    x = np.array([0.5, -1.0, 2.0])
    blocks = [L1Block("x", np.arange(3), lam=0.7, rho=2.0)]
    v = {"x": np.array([0.4, -1.0, 1.5])}
    eta = {"x": np.array([0.1, 0.0, -0.2])}
    got = augmented_lagrangian_value(5.0, x, blocks, v, eta)
    r = x - v["x"]
    want = 5.0 + 0.7 * np.abs(v["x"]).sum() + r @ eta["x"] + 1.0 * r @ r
    assert got == pytest.approx(want, rel=1e-12)
