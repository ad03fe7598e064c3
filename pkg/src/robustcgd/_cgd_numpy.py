"""Vectorized numpy twin of the coordinate descent cycle kernels."""

import numpy as np

from ._scalar_numpy import catoni_holland, erm_mean, mom_alloc, tm_alloc


def _lprime_vec(code, tau, z, y):
    if code == 0:
        return z - y
    if code == 1:
        return np.clip(z - y, -tau, tau)
    if code == 2:
        t = y * z
        e = np.exp(-np.abs(t))
        return np.where(t >= 0, -y * e / (1.0 + e), -y / (1.0 + e))
    return np.sign(z - y)


def _lvalue_vec(code, tau, z, y):
    if code == 0:
        u = z - y
        return 0.5 * u * u
    if code == 1:
        u = np.abs(z - y)
        return np.where(u <= tau, 0.5 * u * u, tau * (u - 0.5 * tau))
    if code == 2:
        t = -y * z
        return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))
    return np.abs(z - y)


def fill_deriv(deriv, X, j, inner, y, code, tau):
    # overflow to inf surfaces as the solver's divergence check, as in numba
    with np.errstate(over="ignore", invalid="ignore"):
        np.multiply(_lprime_vec(code, tau, inner, y), X[:, j], out=deriv)


def empirical_risk(inner, y, code, tau):
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(_lvalue_vec(code, tau, inner, y)))


def apply_estimator(
    deriv, est_code, n_blocks, trim, delta, tol, max_iter, state, perm_buf, means_buf, scratch
):
    if est_code == 0:
        return erm_mean(deriv)
    if est_code == 1:
        return mom_alloc(deriv, n_blocks, state)
    if est_code == 2:
        return tm_alloc(deriv, trim)
    est, _ = catoni_holland(deriv, delta, max_iter, tol)
    return est


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
    with np.errstate(over="ignore", invalid="ignore"):
        for j in coords:
            fill_deriv(deriv, X, j, inner, y, loss_code, loss_tau)
            ghat = apply_estimator(
                deriv, est_code, n_blocks, trim, delta, tol, max_iter,
                state, perm_buf, means_buf, scratch,
            )
            step = -betas[j] * ghat
            if not np.isfinite(step):
                return False
            inner += X[:, j] * step
            theta[j] += step
    return True


def softmax_rows_inplace(inner, probs):
    shifted = inner - inner.max(axis=1, keepdims=True)
    np.exp(shifted, out=probs)
    probs /= probs.sum(axis=1, keepdims=True)


def mc_fill_deriv(deriv, X, j, probs, y, c):
    grad = probs[:, c] - (y == c)
    np.multiply(grad, X[:, j], out=deriv)


def mc_empirical_risk(inner, y):
    shifted = inner - inner.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(inner.shape[0]), y]
    return float(np.mean(lse - picked))


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
    k = inner.shape[1]
    for j in coords:
        softmax_rows_inplace(inner, probs)
        for c in range(k):
            mc_fill_deriv(deriv, X, j, probs, y, c)
            ghat = apply_estimator(
                deriv, est_code, n_blocks, trim, delta, tol, max_iter,
                state, perm_buf, means_buf, scratch,
            )
            step = -betas[j] * ghat
            if not np.isfinite(step):
                return False
            step_buf[c] = step
        inner += np.outer(X[:, j], step_buf)
        theta[j] += step_buf
    return True
