"""Univariate robust location estimators and their selection primitives.

The estimators interpolate between the sample mean and the median:
median-of-means through the number of blocks, the trimmed (winsorized)
mean through the clipping proportion, and Catoni-Holland through its
confidence-driven scale. All run in O(n).
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import backend
from .rng import new_state

if backend.using_numba():
    from . import _scalar_numba as _k
else:
    from . import _scalar_numpy as _k


class RobustCGDWarning(UserWarning):
    """Diagnostic warnings: clamped hyper-parameters, degenerate columns."""


def as_state(rng):
    """Normalize a seed or state into the splitmix64 state array."""
    if isinstance(rng, np.ndarray) and rng.dtype == np.uint64:
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return new_state(rng)
    raise TypeError(f"rng must be an int seed or uint64 state array, got {type(rng)}")


def _as_values(values, min_len=1):
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if v.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} values, got {v.shape[0]}")
    return v


def fisher_yates_permutation(n, rng):
    """Uniformly random permutation of 0..n-1, O(n), seeded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _k.fisher_yates(n, as_state(rng))


def block_boundaries(n, n_blocks):
    """K+1 cut points splitting n items into blocks whose sizes differ by at
    most one; the first n mod K blocks take the extra element."""
    if not 1 <= n_blocks <= n:
        raise ValueError(f"n_blocks must be in [1, {n}], got {n_blocks}")
    base, rem = divmod(n, n_blocks)
    sizes = np.full(n_blocks, base, dtype=np.int64)
    sizes[:rem] += 1
    bounds = np.zeros(n_blocks + 1, dtype=np.int64)
    np.cumsum(sizes, out=bounds[1:])
    return bounds


@dataclass(frozen=True)
class BlockPartition:
    """A sampled partition of 0..n-1 into blocks of near-equal size."""

    permutation: np.ndarray
    boundaries: np.ndarray

    @classmethod
    def sample(cls, n, n_blocks, rng):
        return cls(
            permutation=fisher_yates_permutation(n, rng),
            boundaries=block_boundaries(n, n_blocks),
        )

    @property
    def n_blocks(self):
        return len(self.boundaries) - 1

    def blocks(self):
        for b in range(self.n_blocks):
            yield self.permutation[self.boundaries[b] : self.boundaries[b + 1]]


def quickselect(values, k):
    """k-th order statistic (0-based). Partially reorders ``values`` in place."""
    if not isinstance(values, np.ndarray) or values.dtype != np.float64:
        raise TypeError("quickselect operates in place on a float64 array")
    n = values.shape[0]
    if n == 0:
        raise ValueError("empty array")
    if not 0 <= k < n:
        raise ValueError(f"rank {k} out of range for length {n}")
    return float(_k.quickselect_inplace(values, k))


def median(values):
    """Sample median; averages the two central order statistics for even n."""
    v = _as_values(values).copy()
    return float(_k.median_inplace(v))


def estimate_mom(values, n_blocks, rng):
    """Median of block-wise means over a fresh random partition."""
    v = _as_values(values)
    n = v.shape[0]
    if not 1 <= n_blocks <= n:
        raise ValueError(f"n_blocks must be in [1, {n}], got {n_blocks}")
    return float(_k.mom_alloc(v, n_blocks, as_state(rng)))


def mom_with_partition(values, permutation, n_blocks):
    """MOM over a pinned permutation; deterministic, used for diagnostics."""
    v = _as_values(values)
    perm = np.ascontiguousarray(permutation, dtype=np.int64)
    if perm.shape[0] != v.shape[0]:
        raise ValueError("permutation length must match values")
    if not 1 <= n_blocks <= v.shape[0]:
        raise ValueError("invalid block count")
    return float(_k.mom_perm_alloc(v, perm, n_blocks))


def estimate_tm(values, trim):
    """Winsorized mean: values clipped to the empirical trim quantiles."""
    v = _as_values(values, min_len=2)
    if not 0.0 <= trim < 0.5:
        raise ValueError(f"trim must be in [0, 0.5), got {trim}")
    n = v.shape[0]
    if math.floor(trim * n) >= n / 2:
        raise ValueError("trim removes half the sample or more")
    return float(_k.tm_alloc(v, trim))


class CHInfo(NamedTuple):
    converged: bool


def estimate_ch(values, delta, max_iter=50, tol=1e-8, full_output=False):
    """Catoni-Holland M-estimator of location with data-driven scale."""
    v = _as_values(values, min_len=2)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if max_iter < 1 or tol <= 0:
        raise ValueError("max_iter must be >= 1 and tol > 0")
    if not np.isfinite(v).all():
        raise ValueError("values must be finite")
    est, converged = _k.catoni_holland(v, delta, max_iter, tol)
    if full_output:
        return float(est), CHInfo(converged=bool(converged))
    return float(est)


def estimate_mean(values):
    """Plain sample mean (the non-robust reference estimator)."""
    return float(_k.erm_mean(_as_values(values)))


def estimate_mom_moment(values, alpha, n_blocks, rng):
    """Two-step MOM estimate of the centered (1+alpha)-moment."""
    v = _as_values(values)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if not 1 <= n_blocks <= v.shape[0]:
        raise ValueError("invalid block count")
    return float(_k.mom_moment_alloc(v, alpha, n_blocks, as_state(rng)))


class MomentBoundInfo(NamedTuple):
    factor: float
    valid: bool


def mom_second_moment_upper_bound(
    values, n_blocks, moment_ratio, alpha, rng, log_inv_delta=None, full_output=False
):
    """High-probability upper bound on a raw second moment via inflated MOM.

    ``values`` are the squared variable; the inflation factor
    ``1 / (1 - 12^(1/(1+a)) * C * (K/n)^(a/(1+a)))`` turns the MOM estimate
    into an upper bound under the moment-ratio condition with constant C.
    When the caller derived K from a confidence level it can pass
    ``log_inv_delta`` to use the equivalent ``216^(1/(1+a))`` form exactly.
    If the denominator is not positive the plain MOM estimate is returned
    flagged invalid.
    """
    v = _as_values(values)
    n = v.shape[0]
    if log_inv_delta is not None:
        term = 216.0 ** (1.0 / (1.0 + alpha)) * moment_ratio * (
            log_inv_delta / n
        ) ** (alpha / (1.0 + alpha))
    else:
        term = 12.0 ** (1.0 / (1.0 + alpha)) * moment_ratio * (
            n_blocks / n
        ) ** (alpha / (1.0 + alpha))
    base = float(_k.mom_alloc(v, n_blocks, as_state(rng)))
    denom = 1.0 - term
    if denom <= 0.0:
        result, info = base, MomentBoundInfo(factor=1.0, valid=False)
    else:
        result, info = base / denom, MomentBoundInfo(factor=1.0 / denom, valid=True)
    if full_output:
        return result, info
    return result


def blocks_from_confidence(delta):
    """Block count ceil(18 ln(1/delta)) for the target confidence."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return math.ceil(18.0 * math.log(1.0 / delta))


def tm_eps_from_confidence(delta, eta, n):
    """Trim proportion 8*eta + 12 ln(4/delta)/n, clamped below 1/2."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    eps = 8.0 * eta + 12.0 * math.log(4.0 / delta) / n
    if eps >= 0.5:
        clamped = 0.5 - 1.0 / n
        warnings.warn(
            f"trim proportion {eps:.4f} >= 0.5, clamped to {clamped:.6f}",
            RobustCGDWarning,
            stacklevel=2,
        )
        return clamped
    return eps


ERM = "erm"
MOM = "mom"
TM = "tm"
CH = "ch"

_EST_CODES = {ERM: 0, MOM: 1, TM: 2, CH: 3}


@dataclass(frozen=True)
class EstimatorSpec:
    """Which scalar estimator to apply to a derivative sample, plus its knob."""

    kind: str
    n_blocks: Optional[int] = None
    block_size: Optional[float] = None
    trim: float = 0.0
    delta: float = 0.01
    max_iter: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in _EST_CODES:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == MOM:
            if self.n_blocks is None and self.block_size is None:
                raise ValueError("mom needs n_blocks or block_size")
            if self.n_blocks is not None and self.n_blocks < 1:
                raise ValueError("n_blocks must be >= 1")
            if self.block_size is not None and not 0.0 < self.block_size <= 1.0:
                raise ValueError("block_size must be in (0, 1]")
        if self.kind == TM and not 0.0 <= self.trim < 0.5:
            raise ValueError(f"trim must be in [0, 0.5), got {self.trim}")
        if self.kind == CH and not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")

    @classmethod
    def erm(cls):
        return cls(kind=ERM)

    @classmethod
    def mom(cls, n_blocks=None, block_size=None):
        return cls(kind=MOM, n_blocks=n_blocks, block_size=block_size)

    @classmethod
    def tm(cls, trim):
        return cls(kind=TM, trim=trim)

    @classmethod
    def ch(cls, delta=0.01, max_iter=50, tol=1e-8):
        return cls(kind=CH, delta=delta, max_iter=max_iter, tol=tol)

    def resolve_blocks(self, n):
        """Concrete block count for a sample of size n."""
        if self.kind != MOM:
            return 1
        k = self.n_blocks if self.n_blocks is not None else math.ceil(self.block_size * n)
        if k > n:
            raise ValueError(f"n_blocks={k} exceeds sample size {n}")
        return max(1, k)

    def kernel_args(self, n):
        """(code, n_blocks, trim, delta, tol, max_iter) for the cycle kernels."""
        return (
            _EST_CODES[self.kind],
            self.resolve_blocks(n),
            self.trim,
            self.delta,
            self.tol,
            self.max_iter,
        )

    def label(self):
        if self.kind == MOM:
            knob = self.n_blocks if self.n_blocks is not None else self.block_size
            return f"mom({knob})"
        if self.kind == TM:
            return f"tm({self.trim:g})"
        if self.kind == CH:
            return f"ch({self.delta:g})"
        return "erm"


def estimate(values, spec, rng=None):
    """Apply an EstimatorSpec to a sample."""
    if spec.kind == ERM:
        return estimate_mean(values)
    if spec.kind == MOM:
        n = np.asarray(values).shape[0]
        return estimate_mom(values, spec.resolve_blocks(n), rng)
    if spec.kind == TM:
        return estimate_tm(values, spec.trim)
    return estimate_ch(values, spec.delta, spec.max_iter, spec.tol)
