import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magtransmon.lsq import (ConvergenceError, FitError, finite_difference_jacobian, fit_model,
                             lsq_minimize, nelder_mead_minimize)


def test_linear_problem_converges_fast():
    A = np.array([[1.0, 2.0], [3.0, 1.0], [0.5, -1.0], [2.0, 2.0]])
    b = np.array([1.0, 2.0, 0.3, -1.0])
    res = lsq_minimize(lambda x: A @ x - b, [0.0, 0.0], jac=lambda x: A)
    ref, *_ = np.linalg.lstsq(A, b, rcond=None)
    assert res.converged and res.n_iter <= 3
    assert np.allclose(res.params, ref, atol=1e-10)


def test_rosenbrock():
    res = lsq_minimize(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]), [-1.2, 1.0], max_iter=500)
    assert res.converged
    assert np.allclose(res.params, [1.0, 1.0], atol=1e-8)


def test_bounds_pin_and_report():
    res = lsq_minimize(lambda p: p - np.array([2.0, -1.0]), [0.5, 0.5], bounds=([0, 0], [1, 1]),
                       names=["a", "b"])
    assert np.allclose(res.params, [1.0, 0.0])
    assert set(res.pinned) == {"a", "b"}
    assert "pinned" in res.message


def test_fixed_parameter_untouched():
    res = lsq_minimize(lambda p: p - np.array([2.0, -1.0]), [0.5, 0.5], fixed=[False, True])
    assert res.params[1] == 0.5 and res.params[0] == pytest.approx(2.0)


def test_nonfinite_start_raises():
    with pytest.raises(FitError):
        lsq_minimize(lambda p: np.array([np.nan]), [1.0])


def test_raise_on_failure():
    with pytest.raises(ConvergenceError):
        lsq_minimize(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]), [-1.2, 1.0], max_iter=2,
                     raise_on_failure=True)


@settings(max_examples=20)
@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0), st.integers(0, 1000))
def test_exponential_fit_and_determinism(a, k, seed):
    x = np.linspace(0, 1, 30)
    rng = np.random.default_rng(seed)
    y = a * np.exp(k * x) + 1e-3 * rng.standard_normal(x.size)
    model = lambda xx, p: p[0] * np.exp(p[1] * xx)
    r1 = fit_model(model, x, y, [1.0, 0.0])
    r2 = fit_model(model, x, y, [1.0, 0.0])
    assert np.array_equal(r1.params, r2.params)
    assert r1.params[0] == pytest.approx(a, abs=5e-3)
    assert r1.params[1] == pytest.approx(k, abs=1e-2)


def test_covariance_matches_linear_theory():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 50)
    y = 2 * x + 1 + 0.01 * rng.standard_normal(50)
    res = fit_model(lambda xx, p: p[0] * xx + p[1], x, y, [0.0, 0.0])
    A = np.column_stack([x, np.ones_like(x)])
    s2 = np.sum(res.residuals ** 2) / (50 - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    assert np.allclose(res.covariance, cov, rtol=1e-6)
    assert res.error("p0") == pytest.approx(np.sqrt(cov[0, 0]), rel=1e-6)


def test_singular_jacobian_flagged():
    res = lsq_minimize(lambda p: np.array([p[0] + p[1] - 1.0, 2 * (p[0] + p[1]) - 2.0]), [0.0, 0.0])
    assert res.singular


def test_fd_jacobian_against_analytic():
    f = lambda p: np.array([np.sin(p[0]) * p[1], p[0] ** 3])
    x = np.array([0.7, 1.3])
    J, _ = finite_difference_jacobian(f, x)
    exact = np.array([[np.cos(0.7) * 1.3, np.sin(0.7)], [3 * 0.49, 0.0]])
    assert np.allclose(J, exact, atol=1e-6)


def test_nelder_mead_fallback():
    res = nelder_mead_minimize(lambda p: abs(p[0] - 0.3) + abs(p[1] + 0.2), [0.0, 0.0])
    assert np.allclose(res.params, [0.3, -0.2], atol=1e-6)
