"""Lowest eigenvalues of real symmetric tridiagonal matrices.

Sturm-sequence bisection isolates each eigenvalue inside a Weyl bracket,
then a safeguarded Newton iteration on the characteristic polynomial
(evaluated through the same LDL^T recurrence) polishes it to machine
precision.  The charge-basis matrices here are tiny (41 rows by default)
but are solved hundreds of thousands of times inside fits, so the kernels
are compiled and batched.
"""

import numpy as np
from numba import njit

_EPS = 2.220446049250313e-16
_TINY = 1e-150


@njit(cache=True)
def _count_below(d, e2, x):
    cnt = 0
    q = d[0] - x
    for i in range(1, d.size):
        if q == 0.0:
            q = _TINY
        if q < 0.0:
            cnt += 1
        q = d[i] - x - e2[i - 1] / q
    if q < 0.0:
        cnt += 1
    return cnt


@njit(cache=True)
def _count_and_log_derivative(d, e2, x):
    # returns (#eigenvalues < x, p'(x)/p(x)) with p the characteristic polynomial
    cnt = 0
    q = d[0] - x
    if q == 0.0:
        q = _TINY
    if q < 0.0:
        cnt += 1
    dq = -1.0
    s = dq / q
    for i in range(1, d.size):
        dq = -1.0 + e2[i - 1] * dq / (q * q)
        q = d[i] - x - e2[i - 1] / q
        if q == 0.0:
            q = _TINY
        if q < 0.0:
            cnt += 1
        s += dq / q
    return cnt, s


@njit(cache=True)
def _eigenvalue(d, e2, j, a, b, scale):
    # requires count_below(a) <= j < count_below(b)
    for _ in range(200):
        c = 0.5 * (a + b)
        cnt = _count_below(d, e2, c)
        if cnt > j:
            b = c
            if cnt == j + 1:
                break
        else:
            a = c
    x = 0.5 * (a + b)
    for _ in range(100):
        cnt, s = _count_and_log_derivative(d, e2, x)
        if cnt > j:
            b = x
        else:
            a = x
        xn = x - 1.0 / s if s != 0.0 else 0.5 * (a + b)
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        done = abs(xn - x) <= 4.0 * _EPS * max(abs(x), 1e-3 * scale)
        x = xn
        if done or b - a <= 4.0 * _EPS * scale:
            break
    return x


@njit(cache=True)
def tridiagonal_lowest(d, e, m, out):
    """Write the ``m`` smallest eigenvalues of tridiag(e, d, e) into ``out``."""
    n = d.size
    radius = 0.0
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        radius = max(radius, r)
    ds = np.sort(d)
    if radius == 0.0:
        for j in range(m):
            out[j] = ds[j]
        return out
    e2 = e * e
    scale = max(abs(ds[0]), abs(ds[n - 1])) + radius
    margin = 8.0 * _EPS * scale + _TINY
    prev = -np.inf
    for j in range(m):
        # Weyl: |lambda_j - sorted(d)_j| <= ||offdiag||_2 <= radius
        a = max(ds[j] - radius - margin, prev)
        b = ds[j] + radius + margin
        lam = _eigenvalue(d, e2, j, a, b, scale)
        out[j] = lam
        prev = lam - margin
    return out


@njit(cache=True)
def _fill_charge_diag(d, ec, ng, k):
    for i in range(2 * k + 1):
        x = i - k - ng
        d[i] = 4.0 * ec * x * x


@njit(cache=True)
def cpb_levels_general(ej, ec, ng, k, m):
    """Lowest ``m`` levels of the full (2k+1)-state charge-basis matrix, batched."""
    nb = ej.size
    n = 2 * k + 1
    out = np.empty((nb, m))
    d = np.empty(n)
    e = np.empty(n - 1)
    tmp = np.empty(m)
    for b in range(nb):
        _fill_charge_diag(d, ec[b], ng[b], k)
        for i in range(n - 1):
            e[i] = -0.5 * ej[b]
        tridiagonal_lowest(d, e, m, tmp)
        out[b, :] = tmp
    return out


@njit(cache=True)
def cpb_levels_symmetric(ej, ec, k, m):
    """Lowest ``m`` levels at ng = 0 via the even/odd charge-parity blocks.

    Even block: |0>, (|n> + |-n>)/sqrt2 for n = 1..k (k+1 rows).
    Odd block: (|n> - |-n>)/sqrt2 for n = 1..k (k rows).
    """
    nb = ej.size
    m_even = (m + 1) // 2
    m_odd = m // 2
    out = np.empty((nb, m))
    de = np.empty(k + 1)
    ee = np.empty(k)
    do = np.empty(k)
    eo = np.empty(max(k - 1, 0))
    te = np.empty(m_even)
    to = np.empty(max(m_odd, 1))
    merged = np.empty(m)
    sqrt2 = np.sqrt(2.0)
    for b in range(nb):
        for i in range(k + 1):
            de[i] = 4.0 * ec[b] * i * i
        for i in range(k):
            ee[i] = -0.5 * ej[b]
            do[i] = 4.0 * ec[b] * (i + 1) * (i + 1)
        ee[0] *= sqrt2
        for i in range(k - 1):
            eo[i] = -0.5 * ej[b]
        tridiagonal_lowest(de, ee, m_even, te)
        if m_odd > 0:
            tridiagonal_lowest(do, eo, m_odd, to)
        for i in range(m_even):
            merged[i] = te[i]
        for i in range(m_odd):
            merged[m_even + i] = to[i]
        out[b, :] = np.sort(merged)
    return out
