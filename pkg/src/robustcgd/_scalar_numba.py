"""numba kernels for the scalar robust estimators.

All kernels assume validated, finite float64 input; the public wrappers in
``robust_scalar`` do the checking. RNG state is a one-element uint64 array
advanced in place (see ``rng``).
"""

import math

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)

# E[Z^2 / (1 + Z^2)] for Z standard Gaussian, so that E[chi(Z)] = 0
CATONI_C = 0.3443204575812015
_PI_HALF = math.pi / 2.0


@njit(cache=True)
def next_u64(state):
    s = state[0] + _GAMMA
    state[0] = s
    z = s
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def next_double(state):
    return (next_u64(state) >> np.uint64(11)) * _INV53


@njit(cache=True)
def next_below(state, n):
    nb = np.uint64(n)
    threshold = (np.uint64(0) - nb) % nb
    while True:
        z = next_u64(state)
        if z >= threshold:
            return np.int64(z % nb)


@njit(cache=True)
def fisher_yates_fill(out, state):
    n = out.shape[0]
    for i in range(n):
        out[i] = i
    for i in range(n - 1, 0, -1):
        j = next_below(state, i + 1)
        tmp = out[i]
        out[i] = out[j]
        out[j] = tmp


@njit(cache=True)
def fisher_yates(n, state):
    out = np.empty(n, dtype=np.int64)
    fisher_yates_fill(out, state)
    return out


@njit(cache=True)
def quickselect_inplace(a, k):
    """k-th order statistic (0-based); partially partitions a in place."""
    lo = 0
    hi = a.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < a[lo]:
            a[mid], a[lo] = a[lo], a[mid]
        if a[hi] < a[lo]:
            a[hi], a[lo] = a[lo], a[hi]
        if a[hi] < a[mid]:
            a[hi], a[mid] = a[mid], a[hi]
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                a[i], a[j] = a[j], a[i]
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]
    return a[k]


@njit(cache=True)
def median_inplace(a):
    n = a.shape[0]
    half = n // 2
    upper = quickselect_inplace(a, half)
    if n % 2 == 1:
        return upper
    lower = a[0]
    for i in range(1, half):
        if a[i] > lower:
            lower = a[i]
    return 0.5 * (lower + upper)


@njit(cache=True)
def mom_with_perm(values, perm, n_blocks, means_buf):
    """Median of block means over a pinned sample permutation."""
    n = values.shape[0]
    base = n // n_blocks
    rem = n % n_blocks
    idx = 0
    for b in range(n_blocks):
        size = base + 1 if b < rem else base
        s = 0.0
        for _ in range(size):
            s += values[perm[idx]]
            idx += 1
        means_buf[b] = s / size
    return median_inplace(means_buf[:n_blocks])


@njit(cache=True)
def mom(values, n_blocks, state, perm_buf, means_buf):
    fisher_yates_fill(perm_buf, state)
    return mom_with_perm(values, perm_buf, n_blocks, means_buf)


@njit(cache=True)
def mom_alloc(values, n_blocks, state):
    perm = np.empty(values.shape[0], dtype=np.int64)
    means = np.empty(n_blocks, dtype=np.float64)
    return mom(values, n_blocks, state, perm, means)


@njit(cache=True)
def mom_perm_alloc(values, perm, n_blocks):
    means = np.empty(n_blocks, dtype=np.float64)
    return mom_with_perm(values, perm, n_blocks, means)


@njit(cache=True)
def tm_ranks(n, trim):
    lo = int(math.floor(trim * n))
    hi = int(math.ceil((1.0 - trim) * n)) - 1
    if hi > n - 1:
        hi = n - 1
    return lo, hi


@njit(cache=True)
def trimmed_mean(values, trim, scratch):
    """Winsorized mean: values clipped to the empirical trim quantiles."""
    n = values.shape[0]
    buf = scratch[:n]
    for i in range(n):
        buf[i] = values[i]
    lo, hi = tm_ranks(n, trim)
    q_hi = quickselect_inplace(buf, hi)
    q_lo = quickselect_inplace(buf[: hi + 1], lo)
    s = 0.0
    for i in range(n):
        v = values[i]
        if v < q_lo:
            v = q_lo
        elif v > q_hi:
            v = q_hi
        s += v
    return s / n


@njit(cache=True)
def tm_alloc(values, trim):
    scratch = np.empty(values.shape[0], dtype=np.float64)
    return trimmed_mean(values, trim, scratch)


@njit(cache=True)
def _psi(x):
    # 2*atan(exp(x)) - pi/2; saturates to +-pi/2 in double precision
    if x > 45.0:
        return _PI_HALF
    if x < -45.0:
        return -_PI_HALF
    return 2.0 * math.atan(math.exp(x)) - _PI_HALF


@njit(cache=True)
def _chi(u):
    # u^2/(1+u^2) - c, written so that u*u overflow degrades gracefully
    return 1.0 - 1.0 / (1.0 + u * u) - CATONI_C


@njit(cache=True)
def catoni_holland(values, delta, max_iter, tol):
    """Location M-estimator with data-driven scale.

    Returns (estimate, converged). Fixed-point iterations follow the
    influence function psi and the scale equation chi; the scale turns the
    confidence delta into the interpolation knob between mean and median.
    """
    n = values.shape[0]
    vmin = values[0]
    vmax = values[0]
    s0 = 0.0
    for i in range(n):
        v = values[i]
        if v < vmin:
            vmin = v
        if v > vmax:
            vmax = v
        s0 += v
    if vmin == vmax:
        return values[0], True
    gbar = s0 / n

    var = 0.0
    for i in range(n):
        d = values[i] - gbar
        var += d * d
    sigma = math.sqrt(var / n)

    chi0 = _chi(0.0)
    scale_converged = False
    for _ in range(max_iter):
        acc = 0.0
        for i in range(n):
            acc += _chi((values[i] - gbar) / sigma)
        sigma_new = sigma * (1.0 - chi0 * acc / n)
        done = abs(sigma_new - sigma) <= tol * sigma
        sigma = sigma_new
        if done:
            scale_converged = True
            break

    if sigma < 1e-12 * (vmax - vmin):
        # collapsed scale: fall back to the median instead of dividing by ~0
        buf = values.copy()
        return median_inplace(buf), True

    s = sigma * math.sqrt(n / (2.0 * math.log(4.0 / delta)))
    zeta = gbar
    loc_converged = False
    for _ in range(max_iter):
        acc = 0.0
        for i in range(n):
            acc += _psi((values[i] - zeta) / s)
        step = s * acc / n
        zeta += step
        if abs(step) <= tol * max(s, 1e-12):
            loc_converged = True
            break
    return zeta, scale_converged and loc_converged


@njit(cache=True)
def erm_mean(values):
    s = 0.0
    for i in range(values.shape[0]):
        s += values[i]
    return s / values.shape[0]


@njit(cache=True)
def mom_moment(values, alpha, n_blocks, state, perm_buf, means_buf, dev_buf):
    """Two-step MOM estimate of the centered (1+alpha)-moment."""
    center = mom(values, n_blocks, state, perm_buf, means_buf)
    p = 1.0 + alpha
    for i in range(values.shape[0]):
        dev_buf[i] = abs(values[i] - center) ** p
    return mom(dev_buf, n_blocks, state, perm_buf, means_buf)


@njit(cache=True)
def mom_moment_alloc(values, alpha, n_blocks, state):
    n = values.shape[0]
    perm = np.empty(n, dtype=np.int64)
    means = np.empty(n_blocks, dtype=np.float64)
    dev = np.empty(n, dtype=np.float64)
    return mom_moment(values, alpha, n_blocks, state, perm, means, dev)
