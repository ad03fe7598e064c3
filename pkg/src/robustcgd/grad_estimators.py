"""Robust estimation of partial derivatives and full risk gradients.

Per-sample derivatives are streamed from cached predictions into one
reusable scratch buffer, so a partial-derivative estimate costs O(n) with
no matrix-vector product and no allocation after warm-up.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import backend, losses
from .rng import substate
from .robust_scalar import (
    EstimatorSpec,
    as_state,
    blocks_from_confidence,
    estimate,
    estimate_mom_moment,
)

if backend.using_numba():
    from . import _cgd_numba as _ck
    from . import _scalar_numba as _sk
else:
    from . import _cgd_numpy as _ck
    from . import _scalar_numpy as _sk


def column_major(X):
    return np.asfortranarray(X, dtype=np.float64)


class DerivStream:
    """Caches predictions I = X theta and streams per-sample derivatives.

    Single-owner while the predictions are being mutated; separate streams
    over the same (immutable) data may run concurrently.
    """

    def __init__(self, X, y, loss, theta=None):
        self.X = column_major(X)
        n, d = self.X.shape
        self.loss = loss
        if loss.kind == losses.MULTILOGIT:
            self.y = np.ascontiguousarray(y, dtype=np.int64)
            k = loss.n_classes
            self.theta = np.zeros((d, k)) if theta is None else np.array(theta, dtype=np.float64)
            self.probs = np.empty((n, k))
        else:
            self.y = np.ascontiguousarray(y, dtype=np.float64)
            self.theta = np.zeros(d) if theta is None else np.array(theta, dtype=np.float64)
            self.probs = None
        self.inner = np.ascontiguousarray(self.X @ self.theta)
        self.deriv = np.empty(n)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def resync(self):
        self.inner = np.ascontiguousarray(self.X @ self.theta)

    def inner_drift(self):
        """Worst absolute gap between cached and exact predictions."""
        return float(np.max(np.abs(self.inner - self.X @ self.theta), initial=0.0))

    def fill(self, j, class_index=None):
        """Materialize the per-sample derivatives for coordinate j."""
        if self.loss.kind == losses.MULTILOGIT:
            _ck.softmax_rows_inplace(self.inner, self.probs)
            _ck.mc_fill_deriv(self.deriv, self.X, j, self.probs, self.y, class_index)
        else:
            code, tau = self.loss.kernel_args()
            _ck.fill_deriv(self.deriv, self.X, j, self.inner, self.y, code, tau)
        return self.deriv

    def partial_derivative(self, j, spec, rng):
        """Robust estimate of dR/dtheta_j; a class vector in multiclass mode."""
        state = as_state(rng)
        if self.loss.kind == losses.MULTILOGIT:
            k = self.loss.n_classes
            out = np.empty(k)
            for c in range(k):
                self.fill(j, c)
                out[c] = estimate(self.deriv, spec, state)
            return out
        self.fill(j)
        return estimate(self.deriv, spec, state)


def partial_derivative(X, y, loss, theta, j, spec, rng):
    """One-shot convenience wrapper over DerivStream."""
    return DerivStream(X, y, loss, theta).partial_derivative(j, spec, rng)


@dataclass(frozen=True)
class GradientEstimator:
    """Full-gradient strategy: plain mean, coordinatewise robust, or GMOM."""

    kind: str  # "erm" | "coordwise" | "gmom"
    spec: Optional[EstimatorSpec] = None
    n_blocks: int = 1

    def __post_init__(self):
        if self.kind not in ("erm", "coordwise", "gmom"):
            raise ValueError(f"unknown gradient estimator kind {self.kind!r}")
        if self.kind == "coordwise" and self.spec is None:
            raise ValueError("coordwise gradient estimator needs an EstimatorSpec")
        if self.kind == "gmom" and self.n_blocks < 1:
            raise ValueError("gmom needs n_blocks >= 1")

    @classmethod
    def vec_erm(cls):
        return cls(kind="erm")

    @classmethod
    def coordwise(cls, spec):
        return cls(kind="coordwise", spec=spec)

    @classmethod
    def gmom(cls, n_blocks):
        return cls(kind="gmom", n_blocks=n_blocks)

    def label(self):
        if self.kind == "coordwise":
            return f"coordwise-{self.spec.label()}"
        if self.kind == "gmom":
            return f"gmom({self.n_blocks})"
        return "erm-gd"


def _sample_weights(loss, inner, y):
    """Per-sample derivative factors l'(inner_i, y_i); (n, k) for multiclass."""
    if loss.kind == losses.MULTILOGIT:
        w = losses.softmax_rows(inner)
        w[np.arange(w.shape[0]), y.astype(np.int64)] -= 1.0
        return w
    return losses.loss_derivative(loss, inner, y)


def full_gradient(X, y, loss, theta, kind, rng=None):
    """Estimate the full risk gradient at theta with the chosen strategy."""
    X = column_major(X)
    n = X.shape[0]
    if loss.kind == losses.MULTILOGIT:
        y = np.ascontiguousarray(y, dtype=np.int64)
    else:
        y = np.ascontiguousarray(y, dtype=np.float64)
    inner = X @ theta
    w = _sample_weights(loss, inner, y)

    if kind.kind == "erm" or (kind.kind == "gmom" and kind.n_blocks == 1):
        return X.T @ w / n

    if kind.kind == "coordwise":
        state = as_state(rng)
        grad = np.empty_like(np.atleast_1d(theta), dtype=np.float64)
        if w.ndim == 2:
            for j in range(X.shape[1]):
                for c in range(w.shape[1]):
                    vals = np.ascontiguousarray(w[:, c] * X[:, j])
                    grad[j, c] = estimate(vals, kind.spec, substate(state, j * w.shape[1] + c))
        else:
            for j in range(X.shape[1]):
                vals = np.ascontiguousarray(w * X[:, j])
                grad[j] = estimate(vals, kind.spec, substate(state, j))
        return grad

    # geometric median of block-mean gradients
    state = as_state(rng)
    if kind.n_blocks > n:
        raise ValueError(f"n_blocks={kind.n_blocks} exceeds sample size {n}")
    perm = _sk.fisher_yates(n, state)
    base, rem = divmod(n, kind.n_blocks)
    flat_w = w.reshape(n, -1)
    points = np.empty((kind.n_blocks, theta.size))
    start = 0
    for b in range(kind.n_blocks):
        size = base + 1 if b < rem else base
        idx = perm[start : start + size]
        points[b] = (X[idx].T @ flat_w[idx] / size).reshape(-1)
        start += size
    med = geometric_median(points)
    return med.reshape(np.shape(theta))


class GMInfo(NamedTuple):
    converged: bool
    n_iter: int
    objectives: list


def geometric_median(points, tol=1e-10, max_iter=500, full_output=False):
    """Minimizer of the summed Euclidean distances to the given points.

    Weiszfeld iterations with the Vardi-Zhang correction whenever the
    iterate lands on a data point; starts from the coordinatewise median.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("points must be a (k, d) array with k >= 1")
    if pts.shape[0] == 1:
        out = pts[0].copy()
        return (out, GMInfo(True, 0, [])) if full_output else out

    y = np.median(pts, axis=0)
    objectives = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        diff = pts - y
        dists = np.sqrt((diff * diff).sum(axis=1))
        objectives.append(float(dists.sum()))
        anchor = dists <= 1e-12 * (1.0 + float(np.linalg.norm(y)))
        moving = ~anchor
        if not moving.any():
            converged = True
            break
        inv = 1.0 / dists[moving]
        t_point = (pts[moving] * inv[:, None]).sum(axis=0) / inv.sum()
        if anchor.any():
            pull = (diff[moving] * inv[:, None]).sum(axis=0)
            r = float(np.linalg.norm(pull))
            multiplicity = float(anchor.sum())
            if r <= multiplicity:
                # the anchored point satisfies the optimality condition
                converged = True
                break
            shrink = multiplicity / r
            y_new = (1.0 - shrink) * t_point + shrink * y
        else:
            y_new = t_point
        step = float(np.linalg.norm(y_new - y))
        y = y_new
        if step <= tol * (1.0 + float(np.linalg.norm(y))):
            converged = True
            break
    if full_output:
        return y, GMInfo(converged, it, objectives)
    return y


@dataclass
class GradientMomentStats:
    """Plug-in quantities for the uniform deviation bounds.

    Centered-moment estimates are taken at a single probe parameter (the
    supremum over the parameter set is not computable), so the resulting
    bounds are heuristic diagnostics.
    """

    moment: np.ndarray  # centered (1+alpha)-moment per coordinate
    lipschitz: np.ndarray  # per-coordinate smoothness L_j
    lipschitz_norm: float  # gamma * E||X||^2
    moment_lipschitz: float  # centered (1+alpha)-moment of gamma*||X||^2
    sigma_lipschitz: float  # std of gamma*||X||^2
    diameter: float  # parameter-set diameter
    n: int


def estimate_gradient_moment_stats(X, y, loss, theta, alpha, delta, rng, diameter=2.0):
    X = column_major(X)
    n, d = X.shape
    state = as_state(rng)
    k_blocks = min(max(blocks_from_confidence(delta), 1), n)
    stream = DerivStream(X, y, loss, theta)
    moment = np.empty(d)
    for j in range(d):
        vals = np.ascontiguousarray(stream.fill(j))
        moment[j] = estimate_mom_moment(vals, alpha, k_blocks, substate(state, j))
    gamma = loss.gamma
    sq_norms = gamma * (X * X).sum(axis=1)
    lbar = float(sq_norms.mean())
    m_l = float(np.mean(np.abs(sq_norms - lbar) ** (1.0 + alpha)))
    lipschitz = gamma * (X * X).mean(axis=0)
    return GradientMomentStats(
        moment=moment,
        lipschitz=lipschitz,
        lipschitz_norm=lbar,
        moment_lipschitz=m_l,
        sigma_lipschitz=float(sq_norms.std()),
        diameter=diameter,
        n=n,
    )


def error_vector_bound(kind, stats, delta, alpha, eta=0.0, c_prime=1.0):
    """Uniform high-probability deviation level per coordinate.

    Plug-in evaluation of the per-estimator bound, one of ``"mom"``,
    ``"tm"`` or ``"ch"`` (the plain mean admits no such bound). Used for
    diagnostics and as the soft-threshold level in the projected variant.
    """
    n = stats.n
    d = stats.lipschitz.shape[0]
    a = alpha
    p = a / (1.0 + a)
    net = d * math.log(max(1.5 * stats.diameter * n**p, 1.0))
    additive = (stats.lipschitz_norm + stats.lipschitz) / n**p

    if kind == "mom":
        c_a = 2.0 ** ((3 + 2 * a) / (1 + a)) * 3.0 ** ((1 + 3 * a) / (1 + a))
        moment_term = (stats.moment + stats.moment_lipschitz / n**a) ** (1.0 / (1.0 + a))
        rate = ((math.log(d / delta) + net) / n) ** p
        return c_a * moment_term * rate + additive
    if kind == "tm":
        moment_term = (
            stats.moment + stats.moment_lipschitz / n ** (a * (1.0 + a))
        ) ** (1.0 / (1.0 + a))
        rate = (2.0 * eta + 3.0 * (math.log(4.0 * d / delta) + net) / n) ** p
        return 28.0 * moment_term * rate + additive
    if kind == "ch":
        if a != 1.0:
            raise ValueError("the CH bound requires alpha = 1")
        sigma_sup = np.sqrt(stats.moment)
        net_ch = d * math.log(max(1.5 * stats.diameter * math.sqrt(n), 1.0))
        rate = math.sqrt((math.log(4.0 * d / delta) + net_ch) / n)
        return (
            4.0 * c_prime * (2.0 * sigma_sup + stats.sigma_lipschitz / math.sqrt(n)) * rate
            + (stats.lipschitz_norm + stats.lipschitz) / math.sqrt(n)
        )
    raise ValueError(f"no uniform bound for estimator kind {kind!r}")
