"""Bounded Levenberg-Marquardt least squares.

Damped Gauss-Newton steps solved as an augmented linear least-squares
problem (no normal equations), Moré-style diagonal scaling, Nielsen's
damping update, projection onto box bounds and parameters that can be held
fixed.  Jacobians are analytic when supplied, otherwise central finite
differences that turn one-sided at a bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_EPS = np.finfo(float).eps


class FitError(RuntimeError):
    """A fit could not be set up or produced no usable result."""


class ConvergenceError(FitError):
    """The minimiser stopped without meeting its convergence criteria."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class FitResult:
    params: np.ndarray
    names: tuple
    stderr: np.ndarray
    rms: float
    n_iter: int
    nfev: int
    converged: bool
    message: str = ""
    pinned: tuple = ()
    rejected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    covariance: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    singular: bool = False
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.stderr[self.names.index(name)])

    def as_dict(self):
        return {n: float(v) for n, v in zip(self.names, self.params)}

    @property
    def cost(self) -> float:
        r = self.residuals
        return 0.0 if r is None else 0.5 * float(r @ r)


def finite_difference_jacobian(fun, x, r0=None, lower=None, upper=None, free=None, rel_step=None):
    """Central-difference Jacobian of ``fun`` at ``x``; one-sided next to a bound.

    Returns (jacobian, number of function evaluations).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else lower
    upper = np.full(n, np.inf) if upper is None else upper
    free = np.ones(n, dtype=bool) if free is None else free
    if r0 is None:
        r0 = np.asarray(fun(x), dtype=float)
    nfev = 0
    cols = np.zeros((r0.size, n))
    central = _EPS ** (1.0 / 3.0) if rel_step is None else rel_step
    forward = math.sqrt(_EPS) if rel_step is None else rel_step
    for j in np.flatnonzero(free):
        scale = max(abs(x[j]), 1e-8)
        h = central * scale
        xp, xm = x.copy(), x.copy()
        if x[j] + h <= upper[j] and x[j] - h >= lower[j]:
            xp[j] += h
            xm[j] -= h
            h = xp[j] - xm[j]
            cols[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / h
            nfev += 2
        else:
            h = forward * scale
            if x[j] + h <= upper[j]:
                xp[j] += h
                cols[:, j] = (np.asarray(fun(xp)) - r0) / (xp[j] - x[j])
            else:
                xm[j] -= h
                cols[:, j] = (r0 - np.asarray(fun(xm))) / (x[j] - xm[j])
            nfev += 1
    return cols, nfev


def _prepare_bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lo, hi = bounds
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    if np.any(lo >= hi):
        raise FitError("every lower bound must be below its upper bound")
    return lo, hi


def lsq_minimize(
    residual: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    *,
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    bounds=None,
    fixed: Optional[Sequence[bool]] = None,
    names: Optional[Sequence[str]] = None,
    ftol: float = 1e-12,
    xtol: float = 1e-12,
    gtol: float = 1e-10,
    max_iter: int = 200,
    damping0: float = 1e-9,
    raise_on_failure: bool = False,
) -> FitResult:
    """Minimise 0.5 * ||residual(x)||^2 subject to box bounds.

    ``jac(x)`` must return d residual / d x with shape (m, n); fixed columns
    are ignored.  The result is deterministic for identical inputs.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(n))
    if len(names) != n:
        raise FitError("names and x0 differ in length")
    lower, upper = _prepare_bounds(bounds, n)
    free = np.ones(n, dtype=bool) if fixed is None else ~np.asarray(fixed, dtype=bool)
    x = np.clip(x, lower, upper)

    def fun(p):
        return np.asarray(residual(p), dtype=float).ravel()

    r = fun(x)
    nfev = 1
    if not np.all(np.isfinite(r)):
        raise FitError("residuals are not finite at the initial guess")
    m = r.size
    n_free = int(free.sum())
    cost = 0.5 * float(r @ r)
    cost_floor = _EPS**2 * cost  # residual reduced to rounding level

    def jacobian(p, rp):
        nonlocal nfev
        if jac is not None:
            J = np.array(jac(p), dtype=float).reshape(m, n)
        else:
            J, k = finite_difference_jacobian(fun, p, rp, lower, upper, free)
            nfev += k
        J[:, ~free] = 0.0
        return J

    mu = None
    nu = 2.0
    diag = np.zeros(n)
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    J = jacobian(x, r)
    while it < max_iter:
        it += 1
        if cost <= cost_floor:
            converged, message = True, "exact fit: residual at rounding level"
            break
        g = J.T @ r
        g_proj = _projected_gradient(g, x, lower, upper, free)
        rnorm = math.sqrt(2.0 * cost)
        cnorm = np.linalg.norm(J, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cosines = np.where(cnorm > 0, np.abs(g_proj) / (cnorm * rnorm), 0.0)
        if n_free == 0 or np.max(cosines) <= gtol:
            converged, message = True, "gradient below tolerance"
            break
        diag = np.maximum(diag, cnorm)
        d_safe = np.where(diag > 0, diag, 1.0)
        if mu is None:
            mu = damping0
        accepted = False
        while not accepted:
            h = _damped_step(J, r, d_safe * math.sqrt(mu), free)
            x_new = np.clip(x + h, lower, upper)
            h = x_new - x
            Jh = J @ h
            pred = -(2.0 * (r @ Jh) + Jh @ Jh) * 0.5
            r_new = fun(x_new)
            nfev += 1
            if np.all(np.isfinite(r_new)):
                cost_new = 0.5 * float(r_new @ r_new)
                actual = cost - cost_new
            else:
                cost_new, actual = math.inf, -math.inf
            rho = actual / pred if pred > 0 else -1.0
            step_norm = float(np.linalg.norm(d_safe * h))
            if rho > 1e-4:
                accepted = True
                x, r, prev_cost, cost = x_new, r_new, cost, cost_new
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
            else:
                mu *= nu
                nu *= 2.0
            xnorm = float(np.linalg.norm(d_safe * x))
            if step_norm <= xtol * (xnorm + xtol):
                converged, message = True, "step below tolerance"
                break
            if accepted and abs(actual) <= ftol * prev_cost and pred <= ftol * prev_cost and rho <= 2.0:
                converged, message = True, "relative reduction below tolerance"
                break
            if mu > 1e30:
                message = "damping diverged: no decrease possible"
                break
        J = jacobian(x, r)
        if converged or mu > 1e30:
            break

    pinned = _pinned(x, J.T @ r, lower, upper, free, names)
    result = _finish(x, r, J, free, names, it, nfev, converged, message, pinned)
    if raise_on_failure and not converged:
        raise ConvergenceError(result.message, result)
    return result


def _projected_gradient(g, x, lower, upper, free):
    gp = np.where(free, g, 0.0)
    # at a bound with the descent direction pointing outside: no useful gradient
    at_lo = (x <= lower) & (gp > 0)
    at_hi = (x >= upper) & (gp < 0)
    return np.where(at_lo | at_hi, 0.0, gp)


def _damped_step(J, r, dmu, free):
    idx = np.flatnonzero(free)
    Jf = J[:, idx]
    A = np.vstack([Jf, np.diag(dmu[idx])])
    b = np.concatenate([-r, np.zeros(idx.size)])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    h = np.zeros(J.shape[1])
    h[idx] = sol
    return h


def _pinned(x, g, lower, upper, free, names):
    tol = 1e-10 * np.maximum(1.0, np.abs(x))
    lo = free & (x - lower <= tol) & (g >= 0)
    hi = free & (upper - x <= tol) & (g <= 0)
    return tuple(names[i] for i in np.flatnonzero(lo | hi))


def _finish(x, r, J, free, names, it, nfev, converged, message, pinned):
    m = r.size
    idx = np.flatnonzero(free)
    cov = np.full((x.size, x.size), np.nan)
    stderr = np.zeros(x.size)
    singular = False
    if idx.size:
        Jf = J[:, idx]
        sv = np.linalg.svd(Jf, compute_uv=False)
        singular = bool(sv.size < idx.size or sv[-1] <= sv[0] * 1e-12 * max(Jf.shape) or sv[0] == 0)
        dof = m - idx.size
        s2 = float(r @ r) / dof if dof > 0 else 0.0
        c = s2 * np.linalg.pinv(Jf.T @ Jf)
        cov[np.ix_(idx, idx)] = c
        stderr[idx] = np.sqrt(np.clip(np.diag(c), 0.0, None))
        if singular:
            message += "; singular Jacobian, some parameters are unidentifiable"
            weak = np.flatnonzero(np.linalg.norm(Jf, axis=0) == 0)
            stderr[idx[weak]] = np.inf
    if pinned:
        message += "; pinned at bound: " + ", ".join(pinned)
    rms = math.sqrt(float(r @ r) / m) if m else 0.0
    return FitResult(x.copy(), tuple(names), stderr, rms, it, nfev, bool(converged), message,
                     pinned, covariance=cov, residuals=r.copy(), singular=singular)


def fit_model(model, xdata, ydata, p0, *, sigma=None, **kwargs) -> FitResult:
    """Least-squares fit of ``model(xdata, p)`` to ``ydata``; ``sigma`` weights points."""
    y = np.asarray(ydata, dtype=float)
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def residual(p):
        return (np.asarray(model(xdata, p), dtype=float) - y) * w

    return lsq_minimize(residual, p0, **kwargs)


def nelder_mead_minimize(objective, x0, *, bounds=None, names=None, xatol=1e-10, fatol=1e-14,
                         max_iter=4000) -> FitResult:
    """Derivative-free fallback for non-smooth objectives (wraps scipy's simplex)."""
    from scipy.optimize import minimize

    x0 = np.asarray(x0, dtype=float)
    sp_bounds = None if bounds is None else list(zip(*_prepare_bounds(bounds, x0.size)))
    res = minimize(objective, x0, method="Nelder-Mead", bounds=sp_bounds,
                   options={"xatol": xatol, "fatol": fatol, "maxiter": max_iter, "maxfev": 4 * max_iter})
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(x0.size))
    val = float(res.fun)
    return FitResult(np.asarray(res.x, dtype=float), names, np.full(x0.size, np.nan),
                     math.sqrt(max(val, 0.0)), int(res.nit), int(res.nfev), bool(res.success),
                     str(res.message), residuals=np.array([math.sqrt(max(val, 0.0))]))
