"""Pure-numpy twins of the scalar estimator kernels.

Same callable surface as ``_scalar_numba`` (the subset dispatched through
``robust_scalar``), so the backend can be swapped via ROBUSTCGD_BACKEND.
Randomized operations consume the same splitmix64 state; estimates are
deterministic given the state but not bit-identical across backends since
the permutation machinery differs.
"""

import numpy as np

from .rng import next_u64

CATONI_C = 0.3443204575812015
_PI_HALF = np.pi / 2.0


def fisher_yates(n, state):
    # one state draw seeds numpy's own (Fisher-Yates based) shuffler
    return np.random.default_rng(next_u64(state)).permutation(n).astype(np.int64)


def quickselect_inplace(a, k):
    a.partition(k)
    return a[k]


def median_inplace(a):
    n = a.shape[0]
    half = n // 2
    if n % 2 == 1:
        a.partition(half)
        return a[half]
    a.partition([half - 1, half])
    return 0.5 * (a[half - 1] + a[half])


def _block_slices(n, n_blocks):
    base, rem = divmod(n, n_blocks)
    sizes = np.full(n_blocks, base, dtype=np.int64)
    sizes[:rem] += 1
    starts = np.zeros(n_blocks, dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    return starts, sizes


def mom_perm_alloc(values, perm, n_blocks):
    starts, sizes = _block_slices(values.shape[0], n_blocks)
    sums = np.add.reduceat(values[perm], starts)
    return float(np.median(sums / sizes))


def mom_alloc(values, n_blocks, state):
    return mom_perm_alloc(values, fisher_yates(values.shape[0], state), n_blocks)


def tm_ranks(n, trim):
    lo = int(np.floor(trim * n))
    hi = min(int(np.ceil((1.0 - trim) * n)) - 1, n - 1)
    return lo, hi


def tm_alloc(values, trim):
    n = values.shape[0]
    lo, hi = tm_ranks(n, trim)
    part = np.partition(values, (lo, hi))
    return float(np.mean(np.clip(values, part[lo], part[hi])))


def _psi_mean(values, zeta, s, buf):
    # mean of 2*atan(exp((v - zeta)/s)) - pi/2; atan saturates past +-45
    np.subtract(values, zeta, out=buf)
    buf /= s
    np.clip(buf, -45.0, 45.0, out=buf)
    np.exp(buf, out=buf)
    np.arctan(buf, out=buf)
    return 2.0 * float(buf.mean()) - _PI_HALF


def _chi_mean(centered, sigma, buf):
    # mean of u^2/(1+u^2) - c with u = centered/sigma, overflow-safe
    np.divide(centered, sigma, out=buf)
    np.abs(buf, out=buf)
    np.clip(buf, None, 1e150, out=buf)
    np.multiply(buf, buf, out=buf)
    buf += 1.0
    np.reciprocal(buf, out=buf)
    return 1.0 - float(buf.mean()) - CATONI_C


def catoni_holland(values, delta, max_iter, tol):
    n = values.shape[0]
    vmin = values.min()
    vmax = values.max()
    if vmin == vmax:
        return float(values[0]), True
    gbar = float(values.mean())

    centered = values - gbar
    buf = np.empty_like(values)
    sigma = float(np.sqrt(np.mean(centered * centered)))
    chi0 = -CATONI_C
    scale_converged = False
    for _ in range(max_iter):
        sigma_new = sigma * (1.0 - chi0 * _chi_mean(centered, sigma, buf))
        done = abs(sigma_new - sigma) <= tol * sigma
        sigma = sigma_new
        if done:
            scale_converged = True
            break

    if sigma < 1e-12 * (vmax - vmin):
        return float(np.median(values)), True

    s = sigma * np.sqrt(n / (2.0 * np.log(4.0 / delta)))
    zeta = gbar
    loc_converged = False
    for _ in range(max_iter):
        step = s * _psi_mean(values, zeta, s, buf)
        zeta += step
        if abs(step) <= tol * max(s, 1e-12):
            loc_converged = True
            break
    return zeta, scale_converged and loc_converged


def erm_mean(values):
    return float(values.mean())


def mom_moment_alloc(values, alpha, n_blocks, state):
    center = mom_alloc(values, n_blocks, state)
    dev = np.abs(values - center) ** (1.0 + alpha)
    return mom_alloc(dev, n_blocks, state)
