"""numba kernels for the coordinate descent inner loop.

One call runs one cycle (d coordinate updates) so the Python layer can
record traces between calls without paying per-iteration overhead. The
feature matrix is column-major; a coordinate update touches one column,
the cached predictions and one parameter entry, all in O(n).
"""

import math

import numpy as np
from numba import njit

from ._scalar_numba import (
    catoni_holland,
    erm_mean,
    mom,
    trimmed_mean,
)

_PI_HALF = math.pi / 2.0


@njit(cache=True, inline="always")
def _lprime(code, tau, z, y):
    if code == 0:  # square
        return z - y
    if code == 1:  # huber
        u = z - y
        if u > tau:
            return tau
        if u < -tau:
            return -tau
        return u
    if code == 2:  # logistic, y in {-1, +1}
        t = y * z
        if t >= 0.0:
            e = math.exp(-t)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(t))
    # lad subgradient
    u = z - y
    if u > 0.0:
        return 1.0
    if u < 0.0:
        return -1.0
    return 0.0


@njit(cache=True, inline="always")
def _lvalue(code, tau, z, y):
    if code == 0:
        u = z - y
        return 0.5 * u * u
    if code == 1:
        u = abs(z - y)
        if u <= tau:
            return 0.5 * u * u
        return tau * (u - 0.5 * tau)
    if code == 2:
        t = -y * z
        if t > 0.0:
            return t + math.log1p(math.exp(-t))
        return math.log1p(math.exp(t))
    return abs(z - y)


@njit(cache=True)
def fill_deriv(deriv, X, j, inner, y, code, tau):
    """Per-sample partial derivatives for coordinate j from cached predictions."""
    n = inner.shape[0]
    col = X[:, j]
    for i in range(n):
        deriv[i] = _lprime(code, tau, inner[i], y[i]) * col[i]


@njit(cache=True)
def empirical_risk(inner, y, code, tau):
    n = inner.shape[0]
    s = 0.0
    for i in range(n):
        s += _lvalue(code, tau, inner[i], y[i])
    return s / n


@njit(cache=True)
def apply_estimator(
    deriv, est_code, n_blocks, trim, delta, tol, max_iter, state, perm_buf, means_buf, scratch
):
    if est_code == 0:
        return erm_mean(deriv)
    if est_code == 1:
        return mom(deriv, n_blocks, state, perm_buf, means_buf)
    if est_code == 2:
        return trimmed_mean(deriv, trim, scratch)
    est, _ = catoni_holland(deriv, delta, max_iter, tol)
    return est


@njit(cache=True)
def cgd_cycle(
    X,
    y,
    inner,
    theta,
    betas,
    coords,
    loss_code,
    loss_tau,
    est_code,
    n_blocks,
    trim,
    delta,
    tol,
    max_iter,
    state,
    deriv,
    perm_buf,
    means_buf,
    scratch,
):
    """Run one cycle of coordinate updates in place; returns False on overflow."""
    n = inner.shape[0]
    for t in range(coords.shape[0]):
        j = coords[t]
        fill_deriv(deriv, X, j, inner, y, loss_code, loss_tau)
        ghat = apply_estimator(
            deriv, est_code, n_blocks, trim, delta, tol, max_iter,
            state, perm_buf, means_buf, scratch,
        )
        step = -betas[j] * ghat
        if not math.isfinite(step):
            return False
        col = X[:, j]
        for i in range(n):
            inner[i] += col[i] * step
        theta[j] += step
    return True


@njit(cache=True)
def softmax_rows_inplace(inner, probs):
    n, k = inner.shape
    for i in range(n):
        m = inner[i, 0]
        for c in range(1, k):
            if inner[i, c] > m:
                m = inner[i, c]
        total = 0.0
        for c in range(k):
            e = math.exp(inner[i, c] - m)
            probs[i, c] = e
            total += e
        for c in range(k):
            probs[i, c] /= total



@njit(cache=True)
def mc_fill_deriv(deriv, X, j, probs, y, c):
    n = probs.shape[0]
    col = X[:, j]
    for i in range(n):
        grad = probs[i, c]
        if y[i] == c:
            grad -= 1.0
        deriv[i] = grad * col[i]


@njit(cache=True)
def mc_empirical_risk(inner, y):
    n, k = inner.shape
    s = 0.0
    for i in range(n):
        m = inner[i, 0]
        for c in range(1, k):
            if inner[i, c] > m:
                m = inner[i, c]
        total = 0.0
        for c in range(k):
            total += math.exp(inner[i, c] - m)
        s += math.log(total) - (inner[i, y[i]] - m)
    return s / n


@njit(cache=True)
def mc_cgd_cycle(
    X,
    y,
    inner,
    theta,
    betas,
    coords,
    est_code,
    n_blocks,
    trim,
    delta,
    tol,
    max_iter,
    state,
    deriv,
    perm_buf,
    means_buf,
    scratch,
    probs,
    step_buf,
):
    """Block-coordinate cycle: one feature updates all class weights at once."""
    n, k = inner.shape
    for t in range(coords.shape[0]):
        j = coords[t]
        softmax_rows_inplace(inner, probs)
        for c in range(k):
            mc_fill_deriv(deriv, X, j, probs, y, c)
            ghat = apply_estimator(
                deriv, est_code, n_blocks, trim, delta, tol, max_iter,
                state, perm_buf, means_buf, scratch,
            )
            step = -betas[j] * ghat
            if not math.isfinite(step):
                return False
            step_buf[c] = step
        col = X[:, j]
        for i in range(n):
            for c in range(k):
                inner[i, c] += col[i] * step_buf[c]
        for c in range(k):
            theta[j, c] += step_buf[c]
    return True
