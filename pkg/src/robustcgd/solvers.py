"""Optimization engines: robust CGD, its soft-thresholded projected variant,
robust full-gradient descent baselines, and observable step sizes.

A CGD iteration estimates one partial derivative from the cached
predictions, updates that parameter and patches the prediction cache with
one column, so a full cycle costs O(nd) like a single non-robust gradient
evaluation. The predictions are recomputed exactly every ``resync_every``
cycles to arrest floating-point drift.
"""

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import backend, losses
from .grad_estimators import column_major, full_gradient
from .rng import new_state, next_below, next_double, substate
from .robust_scalar import (
    EstimatorSpec,
    RobustCGDWarning,
    as_state,
    estimate,
    mom_second_moment_upper_bound,
)

if backend.using_numba():
    from . import _cgd_numba as _ck
    from . import _scalar_numba as _sk
else:
    from . import _cgd_numpy as _ck
    from . import _scalar_numpy as _sk

_LIPSCHITZ_FLOOR = 1e-12


class DivergenceError(RuntimeError):
    """Iterates left the finite range; carries the last finite state."""

    def __init__(self, cycle, theta):
        super().__init__(f"solver diverged during cycle {cycle}")
        self.cycle = cycle
        self.theta = theta


@dataclass(frozen=True)
class GivenLipschitz:
    lipschitz: np.ndarray


@dataclass(frozen=True)
class EstimatedMOM:
    delta: float = 0.01
    moment_ratio: float = 1.0
    alpha: float = 1.0


@dataclass(frozen=True)
class FixedSteps:
    steps: np.ndarray


StepSizeMode = Union[GivenLipschitz, EstimatedMOM, FixedSteps]


@dataclass(frozen=True)
class SoftThreshold:
    """Clip estimated partial derivatives at per-coordinate levels, then
    project onto a box. ``eps`` is a vector or a callback
    ``(j, theta, ghat) -> level``."""

    eps: Union[np.ndarray, Callable]
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None


UNIFORM = "uniform"
IMPORTANCE = "importance"
CYCLIC = "cyclic"


@dataclass(frozen=True)
class SolverConfig:
    sampling: str = CYCLIC
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec.erm)
    max_cycles: int = 100
    step_sizes: StepSizeMode = field(default_factory=EstimatedMOM)
    threshold: Optional[SoftThreshold] = None
    seed: int = 0
    fit_intercept: bool = False
    record_objective: bool = True
    snapshot_stride: int = 0
    resync_every: int = 100

    def __post_init__(self):
        if self.sampling not in (UNIFORM, IMPORTANCE, CYCLIC):
            raise ValueError(f"unknown sampling scheme {self.sampling!r}")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")


@dataclass
class RunRecord:
    """Per-cycle trace of a fit."""

    objective: Optional[np.ndarray]
    oracle_excess: Optional[np.ndarray]
    elapsed_ns: np.ndarray  # cumulative, monotone nondecreasing
    thetas: list
    n_cycles: int
    diagnostics: dict


def soft_threshold(x, eps):
    """sign(x) * (|x| - eps)_+ ; contracts toward zero by eps."""
    return np.sign(x) * np.maximum(np.abs(x) - eps, 0.0)


def estimate_step_sizes(X, loss, mode, rng=None):
    """Per-coordinate step sizes beta_j.

    ``GivenLipschitz`` inverts the provided constants; ``EstimatedMOM``
    inverts gamma times an observable MOM upper bound on E[(X^j)^2];
    ``FixedSteps`` passes through. Degenerate columns are floored with a
    diagnostic so steps stay finite.
    """
    X = column_major(X)
    n, d = X.shape
    if isinstance(mode, FixedSteps):
        steps = np.asarray(mode.steps, dtype=np.float64)
        if steps.shape != (d,) or not (steps > 0).all():
            raise ValueError("fixed steps must be d positive values")
        return steps.copy()
    if isinstance(mode, GivenLipschitz):
        lips = np.asarray(mode.lipschitz, dtype=np.float64)
        if lips.shape != (d,):
            raise ValueError("need one Lipschitz constant per coordinate")
    else:
        state = as_state(rng) if rng is not None else new_state(0)
        log_inv = math.log(2.0 * d / mode.delta)
        k_blocks = min(max(math.ceil(18.0 * log_inv), 1), n)
        lips = np.empty(d)
        for j in range(d):
            col_sq = np.ascontiguousarray(X[:, j] * X[:, j])
            bound = mom_second_moment_upper_bound(
                col_sq,
                k_blocks,
                mode.moment_ratio,
                mode.alpha,
                substate(state, j),
                log_inv_delta=log_inv,
            )
            lips[j] = loss.gamma * bound
    degenerate = lips < _LIPSCHITZ_FLOOR
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} zero-variance column(s), flooring their "
            "Lipschitz constants",
            RobustCGDWarning,
            stacklevel=2,
        )
        lips = np.maximum(lips, _LIPSCHITZ_FLOOR)
    return 1.0 / lips


def _augment_intercept(X):
    n = X.shape[0]
    return column_major(np.hstack([X, np.ones((n, 1))]))


def _prepare_labels(loss, y):
    if loss.kind == losses.MULTILOGIT:
        return np.ascontiguousarray(y, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if loss.kind == losses.LOGISTIC:
        uniq = np.unique(y)
        if np.all(np.isin(uniq, (0.0, 1.0))):
            y = 2.0 * y - 1.0
        elif not np.all(np.isin(uniq, (-1.0, 1.0))):
            raise ValueError("logistic labels must be {0,1} or {-1,+1}")
    return y


def _draw_cycle_coords(sampling, d, state, base_order, cum_weights):
    if sampling == CYCLIC:
        return base_order
    coords = np.empty(d, dtype=np.int64)
    if sampling == UNIFORM:
        for t in range(d):
            coords[t] = next_below(state, d)
    else:
        total = cum_weights[-1]
        for t in range(d):
            coords[t] = np.searchsorted(cum_weights, next_double(state) * total, side="right")
        np.clip(coords, 0, d - 1, out=coords)
    return coords


def cgd_fit(X, y, loss, config, oracle=None, theta0=None):
    """Robust coordinate gradient descent.

    Runs ``max_cycles`` cycles (d iterations each) with the configured
    coordinate sampling, derivative estimator and step sizes. Returns the
    final parameter and the per-cycle trace. Raises ``DivergenceError``
    when an update stops being finite.
    """
    X = column_major(X)
    if config.fit_intercept:
        betas_raw = estimate_step_sizes(X, loss, config.step_sizes, rng=new_state(config.seed ^ 0x5EED))
        X = _augment_intercept(X)
        betas = np.append(betas_raw, 1.0 / loss.gamma)
    else:
        betas = estimate_step_sizes(X, loss, config.step_sizes, rng=new_state(config.seed ^ 0x5EED))
    n, d = X.shape
    y = _prepare_labels(loss, y)
    multiclass = loss.kind == losses.MULTILOGIT

    if theta0 is None:
        theta = np.zeros((d, loss.n_classes)) if multiclass else np.zeros(d)
    else:
        theta = np.array(theta0, dtype=np.float64)
        if config.fit_intercept:
            raise ValueError("theta0 with fit_intercept is ambiguous; augment manually")
    inner = np.ascontiguousarray(X @ theta)

    state = new_state(config.seed)
    base_order = _sk.fisher_yates(d, state)
    cum_weights = np.cumsum(1.0 / betas)

    est_code, n_blocks, trim, ch_delta, ch_tol, ch_iter = config.estimator.kernel_args(n)
    loss_code, loss_tau = (0, 0.0) if multiclass else loss.kernel_args()

    deriv = np.empty(n)
    perm_buf = np.empty(n, dtype=np.int64)
    means_buf = np.empty(max(n_blocks, 1), dtype=np.float64)
    scratch = np.empty(n)
    if multiclass:
        probs = np.empty((n, loss.n_classes))
        step_buf = np.empty(loss.n_classes)

    objective = [] if config.record_objective else None
    oracle_excess = [] if oracle is not None else None
    elapsed = []
    thetas = []
    max_drift = 0.0
    t_start = time.perf_counter_ns()

    for cycle in range(1, config.max_cycles + 1):
        last_finite = theta.copy()
        coords = _draw_cycle_coords(config.sampling, d, state, base_order, cum_weights)
        if config.threshold is not None:
            ok = _threshold_cycle(
                X, y, inner, theta, betas, coords, loss, config.estimator,
                config.threshold, state, deriv,
            )
        elif multiclass:
            ok = _ck.mc_cgd_cycle(
                X, y, inner, theta, betas, coords,
                est_code, n_blocks, trim, ch_delta, ch_tol, ch_iter,
                state, deriv, perm_buf, means_buf, scratch, probs, step_buf,
            )
        else:
            ok = _ck.cgd_cycle(
                X, y, inner, theta, betas, coords, loss_code, loss_tau,
                est_code, n_blocks, trim, ch_delta, ch_tol, ch_iter,
                state, deriv, perm_buf, means_buf, scratch,
            )
        if not ok or not np.isfinite(theta).all():
            raise DivergenceError(cycle, last_finite)
        if cycle % config.resync_every == 0:
            exact = X @ theta
            max_drift = max(max_drift, float(np.max(np.abs(inner - exact), initial=0.0)))
            inner = np.ascontiguousarray(exact)
        if config.record_objective:
            if multiclass:
                objective.append(_ck.mc_empirical_risk(inner, y))
            else:
                objective.append(_ck.empirical_risk(inner, y, loss_code, loss_tau))
        if oracle is not None:
            oracle_excess.append(oracle.excess_risk(theta[:-1] if config.fit_intercept else theta))
        if config.snapshot_stride and cycle % config.snapshot_stride == 0:
            thetas.append((cycle, theta.copy()))
        elapsed.append(time.perf_counter_ns() - t_start)

    final_drift = float(np.max(np.abs(inner - X @ theta), initial=0.0))
    record = RunRecord(
        objective=np.asarray(objective) if objective is not None else None,
        oracle_excess=np.asarray(oracle_excess) if oracle_excess is not None else None,
        elapsed_ns=np.asarray(elapsed, dtype=np.int64),
        thetas=thetas,
        n_cycles=config.max_cycles,
        diagnostics={
            "max_inner_drift": max(max_drift, final_drift),
            "final_inner_drift": final_drift,
            "backend": backend.get_backend(),
        },
    )
    return theta, record


def _threshold_cycle(X, y, inner, theta, betas, coords, loss, spec, threshold, state, deriv):
    """Projected soft-threshold updates (the non-strongly-convex variant)."""
    if loss.kind == losses.MULTILOGIT:
        raise NotImplementedError("threshold mode supports vector parameters only")
    code, tau = loss.kernel_args()
    for j in coords:
        _ck.fill_deriv(deriv, X, j, inner, y, code, tau)
        ghat = estimate(deriv, spec, state)
        if callable(threshold.eps):
            eps_j = threshold.eps(j, theta, ghat)
        else:
            eps_j = threshold.eps[j]
        target = theta[j] - betas[j] * soft_threshold(ghat, eps_j)
        if threshold.lower is not None:
            target = max(target, threshold.lower[j])
        if threshold.upper is not None:
            target = min(target, threshold.upper[j])
        step = target - theta[j]
        if not math.isfinite(step):
            return False
        inner += X[:, j] * step
        theta[j] += step
    return True


def gd_fit(X, y, loss, kind, step=None, max_iters=100, seed=0, oracle=None, theta0=None):
    """Full-gradient descent with a (robust) vector gradient estimator.

    Without an explicit step, uses 1/L with L = gamma * d * (largest
    estimated column second moment), a safe upper bound on the smoothness.
    """
    X = column_major(X)
    n, d = X.shape
    y = _prepare_labels(loss, y)
    state = new_state(seed)
    if step is None:
        sq = (X * X).mean(axis=0)
        lips = loss.gamma * d * float(sq.max())
        step = 1.0 / max(lips, _LIPSCHITZ_FLOOR)
    if step <= 0:
        raise ValueError("step must be positive")

    multiclass = loss.kind == losses.MULTILOGIT
    if theta0 is None:
        theta = np.zeros((d, loss.n_classes)) if multiclass else np.zeros(d)
    else:
        theta = np.array(theta0, dtype=np.float64)

    objective = []
    oracle_excess = [] if oracle is not None else None
    elapsed = []
    t_start = time.perf_counter_ns()
    for it in range(1, max_iters + 1):
        grad = full_gradient(X, y, loss, theta, kind, rng=substate(state, it))
        last_finite = theta
        theta = theta - step * grad
        if not np.isfinite(theta).all():
            raise DivergenceError(it, last_finite)
        inner = X @ theta
        objective.append(losses.empirical_risk(loss, inner, y))
        if oracle is not None:
            oracle_excess.append(oracle.excess_risk(theta))
        elapsed.append(time.perf_counter_ns() - t_start)
    record = RunRecord(
        objective=np.asarray(objective),
        oracle_excess=np.asarray(oracle_excess) if oracle_excess is not None else None,
        elapsed_ns=np.asarray(elapsed, dtype=np.int64),
        thetas=[],
        n_cycles=max_iters,
        diagnostics={"step": step},
    )
    return theta, record


def oracle_gd_fit(oracle, step, max_iters, theta0=None):
    """Gradient descent on the true risk of a simulated problem."""
    sigma = oracle.sigma
    theta_star = oracle.theta_star
    theta = np.zeros_like(theta_star) if theta0 is None else np.array(theta0, dtype=np.float64)
    excess = []
    elapsed = []
    t_start = time.perf_counter_ns()
    for _ in range(max_iters):
        theta = theta - step * (sigma @ (theta - theta_star))
        excess.append(oracle.excess_risk(theta))
        elapsed.append(time.perf_counter_ns() - t_start)
    record = RunRecord(
        objective=None,
        oracle_excess=np.asarray(excess),
        elapsed_ns=np.asarray(elapsed, dtype=np.int64),
        thetas=[],
        n_cycles=max_iters,
        diagnostics={"step": step},
    )
    return theta, record
