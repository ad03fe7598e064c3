import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import robustcgd as rc
from robustcgd.datagen import OracleInfo
from robustcgd.losses import Loss
from robustcgd.robust_scalar import RobustCGDWarning
from robustcgd.solvers import (
    DivergenceError,
    EstimatedMOM,
    FixedSteps,
    GivenLipschitz,
    SoftThreshold,
    SolverConfig,
    cgd_fit,
    estimate_step_sizes,
    gd_fit,
    oracle_gd_fit,
    soft_threshold,
)

from conftest import gaussian_regression


# -------------------------------------------------------------- step sizes

def test_step_sizes_constant_column_no_inflation():
    X = np.ones((100, 1))
    betas = estimate_step_sizes(X, Loss.square(), EstimatedMOM(moment_ratio=0.0))
    assert betas[0] == pytest.approx(1.0, rel=1e-12)


def test_step_sizes_pm_two_column():
    n = 10_000
    X = np.array([[-2.0], [2.0]] * (n // 2))
    delta = 0.01
    betas = estimate_step_sizes(X, Loss.square(), EstimatedMOM(delta=delta), rng=rc.new_state(0))
    # E[(X^j)^2] = 4 exactly; inflation from the 216-form with log(2d/delta)
    log_inv = math.log(2.0 / delta)
    factor = 1.0 / (1.0 - math.sqrt(216.0) * math.sqrt(log_inv / n))
    assert factor > 1.0
    assert betas[0] == pytest.approx(1.0 / (4.0 * factor), rel=1e-12)


def test_step_sizes_small_sample_falls_back_to_plain_estimate():
    # the inflation denominator goes nonpositive at this n; the bound is
    # flagged invalid and the raw estimate is used
    X = np.array([[-2.0], [2.0]] * 50)
    betas = estimate_step_sizes(X, Loss.square(), EstimatedMOM(delta=0.01), rng=rc.new_state(0))
    assert betas[0] == pytest.approx(0.25, rel=1e-12)


def test_step_sizes_logistic_quadruples():
    X, _, _ = gaussian_regression(200, 3, seed=0)
    sq = estimate_step_sizes(X, Loss.square(), EstimatedMOM(moment_ratio=0.0), rng=rc.new_state(1))
    lg = estimate_step_sizes(X, Loss.logistic(), EstimatedMOM(moment_ratio=0.0), rng=rc.new_state(1))
    assert lg == pytest.approx(4.0 * sq, rel=1e-12)


def test_step_sizes_zero_variance_column_floored():
    X = np.zeros((50, 1))
    with pytest.warns(RobustCGDWarning):
        betas = estimate_step_sizes(X, Loss.square(), EstimatedMOM())
    assert np.isfinite(betas).all() and (betas > 0).all()


def test_step_sizes_given_and_fixed():
    X = np.ones((10, 2))
    given = estimate_step_sizes(X, Loss.square(), GivenLipschitz(np.array([2.0, 4.0])))
    assert given == pytest.approx([0.5, 0.25])
    fixed = estimate_step_sizes(X, Loss.square(), FixedSteps(np.array([0.1, 0.2])))
    assert fixed == pytest.approx([0.1, 0.2])
    with pytest.raises(ValueError):
        estimate_step_sizes(X, Loss.square(), FixedSteps(np.array([0.1, -0.2])))


# ----------------------------------------------------------- soft threshold

def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-4.0, 0.0) == -4.0


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-1e8, 1e8),
    st.floats(-1e8, 1e8),
    st.floats(0, 1e8),
)
def test_soft_threshold_is_a_contraction(x, y, eps):
    slack = 1e-12 * (1.0 + abs(x) + abs(y))  # rounding of the subtractions
    assert abs(soft_threshold(x, eps) - soft_threshold(y, eps)) <= abs(x - y) + slack


# -------------------------------------------------------------- cgd basics

def _ols(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


@pytest.mark.parametrize("d", [1, 5])
def test_cgd_erm_reaches_ols(d):
    X, y, _ = gaussian_regression(300, d, noise=0.3, seed=d)
    cfg = SolverConfig(
        sampling="cyclic",
        estimator=rc.EstimatorSpec.erm(),
        max_cycles=60,
        step_sizes=GivenLipschitz((X * X).mean(axis=0)),
        seed=0,
    )
    theta, _ = cgd_fit(X, y, Loss.square(), cfg)
    ols = _ols(X, y)
    assert np.linalg.norm(theta - ols) / np.linalg.norm(ols) < 1e-8


def test_cgd_zero_cycles_returns_initial():
    X, y, _ = gaussian_regression(50, 3, seed=2)
    cfg = SolverConfig(estimator=rc.EstimatorSpec.erm(), max_cycles=0,
                       step_sizes=GivenLipschitz((X * X).mean(axis=0)))
    theta, record = cgd_fit(X, y, Loss.square(), cfg)
    assert np.array_equal(theta, np.zeros(3))
    assert record.n_cycles == 0 and len(record.elapsed_ns) == 0


def test_cgd_duplicated_rows_match_single_copy():
    X, y, _ = gaussian_regression(80, 3, seed=3)
    L = (X * X).mean(axis=0)
    cfg = SolverConfig(sampling="cyclic", estimator=rc.EstimatorSpec.erm(), max_cycles=50,
                       step_sizes=GivenLipschitz(L), seed=9)
    theta_single, _ = cgd_fit(X, y, Loss.square(), cfg)
    theta_double, _ = cgd_fit(np.vstack([X, X]), np.concatenate([y, y]), Loss.square(), cfg)
    assert theta_double == pytest.approx(theta_single, abs=1e-9)


def test_cgd_cyclic_rerun_bit_identical():
    X, y, _ = gaussian_regression(100, 4, seed=4)
    cfg = SolverConfig(sampling="cyclic", estimator=rc.EstimatorSpec.mom(n_blocks=10),
                       max_cycles=30, step_sizes=GivenLipschitz((X * X).mean(axis=0)), seed=21)
    a, _ = cgd_fit(X, y, Loss.square(), cfg)
    b, _ = cgd_fit(X, y, Loss.square(), cfg)
    assert np.array_equal(a, b)


def test_cgd_divergence_raises_with_last_state():
    X, y, _ = gaussian_regression(60, 2, seed=5)
    cfg = SolverConfig(estimator=rc.EstimatorSpec.erm(), max_cycles=200,
                       step_sizes=FixedSteps(np.array([50.0, 50.0])), seed=0)
    with pytest.raises(DivergenceError) as err:
        cgd_fit(X, y, Loss.square(), cfg)
    assert np.isfinite(err.value.theta).all()
    assert err.value.cycle >= 1


def test_cgd_fit_intercept_recovers_offset():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((400, 2))
    y = X @ np.array([1.0, -2.0]) + 3.0 + 0.05 * rng.standard_normal(400)
    cfg = SolverConfig(estimator=rc.EstimatorSpec.erm(), max_cycles=200,
                       step_sizes=EstimatedMOM(moment_ratio=0.0), seed=0, fit_intercept=True)
    theta, _ = cgd_fit(X, y, Loss.square(), cfg)
    assert theta.shape == (3,)
    assert theta[-1] == pytest.approx(3.0, abs=0.05)


def test_cgd_inner_product_invariant_long_run():
    X, y, _ = gaussian_regression(500, 5, noise=1.0, seed=7)
    cfg = SolverConfig(sampling="uniform", estimator=rc.EstimatorSpec.mom(n_blocks=20),
                       max_cycles=2000, step_sizes=GivenLipschitz((X * X).mean(axis=0)),
                       seed=1, record_objective=False)
    theta, record = cgd_fit(X, y, Loss.square(), cfg)
    scale = 1.0 + np.abs(theta).sum() * np.abs(X).max()
    assert record.diagnostics["max_inner_drift"] <= 1e-6 * scale


def test_cgd_elapsed_ns_monotone():
    X, y, _ = gaussian_regression(100, 3, seed=8)
    cfg = SolverConfig(estimator=rc.EstimatorSpec.erm(), max_cycles=20,
                       step_sizes=GivenLipschitz((X * X).mean(axis=0)))
    _, record = cgd_fit(X, y, Loss.square(), cfg)
    assert (np.diff(record.elapsed_ns) >= 0).all()


# ---------------------------------------------------------------- sampling

def _cycles_to_reach(oracle, record, level):
    below = np.nonzero(record.oracle_excess <= level)[0]
    return int(below[0]) + 1 if len(below) else record.n_cycles + 1


def test_importance_no_slower_than_uniform_on_skewed_problem():
    # the regime importance sampling targets: a strongly correlated block of
    # high-curvature coordinates (many sweeps needed) among many low-curvature
    # ones, so sum(L_j) << d * L_max
    d, heavy = 20, 4
    scales = np.ones(d)
    scales[-heavy:] = 10.0  # L_max / L_min = 100
    corr = np.eye(d)
    rho = 0.85
    corr[-heavy:, -heavy:] = rho * np.ones((heavy, heavy)) + (1 - rho) * np.eye(heavy)
    chol = np.linalg.cholesky(corr)
    sigma = np.diag(scales) @ corr @ np.diag(scales)
    theta_star = np.zeros(d)
    theta_star[-heavy:] = 1.0 / math.sqrt(heavy)
    diffs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = (rng.standard_normal((4000, d)) @ chol.T) * scales
        y = X @ theta_star + 0.1 * rng.standard_normal(4000)
        oracle = OracleInfo(sigma=sigma, theta_star=theta_star, noise_variance=0.01)
        counts = {}
        for sampling in ("uniform", "importance"):
            cfg = SolverConfig(sampling=sampling, estimator=rc.EstimatorSpec.erm(),
                               max_cycles=400, step_sizes=GivenLipschitz((X * X).mean(axis=0)),
                               seed=seed, record_objective=False)
            _, record = cgd_fit(X, y, Loss.square(), cfg, oracle=oracle)
            counts[sampling] = _cycles_to_reach(oracle, record, 1e-3)
        diffs.append(counts["importance"] - counts["uniform"])
    assert np.median(diffs) <= 0


def correlated_problem(d=5, rho=0.8, n=50_000, noise=0.1, seed=0):
    corr = rho * np.ones((d, d)) + (1 - rho) * np.eye(d)
    scales = np.sqrt(np.geomspace(1.0, 10.0, d))
    sigma = np.diag(scales) @ corr @ np.diag(scales)
    theta_star = np.ones(d) / math.sqrt(d)
    rng = np.random.default_rng(seed)
    X = (rng.standard_normal((n, d)) @ np.linalg.cholesky(corr).T) * scales
    y = X @ theta_star + noise * rng.standard_normal(n)
    oracle = OracleInfo(sigma=sigma, theta_star=theta_star, noise_variance=noise**2)
    return X, y, oracle


def test_contraction_rate_at_least_half_theoretical():
    # per-cycle log10 decay >= 0.5 * lambda / (L_max ln 10) before the floor
    X, y, oracle = correlated_problem(seed=3)
    lam = float(np.linalg.eigvalsh(oracle.sigma).min())
    l_max = float(oracle.sigma.diagonal().max())
    cfg = SolverConfig(sampling="uniform", estimator=rc.EstimatorSpec.erm(), max_cycles=100,
                       step_sizes=GivenLipschitz(oracle.sigma.diagonal()), seed=3,
                       record_objective=False)
    _, record = cgd_fit(X, y, Loss.square(), cfg, oracle=oracle)
    excess = record.oracle_excess
    floor = float(np.median(excess[-5:]))
    pre_floor = excess[excess > 100 * floor]
    assert len(pre_floor) >= 10
    start = oracle.excess_risk(np.zeros(X.shape[1]))
    decay_per_cycle = (math.log10(start) - math.log10(pre_floor[-1])) / len(pre_floor)
    required = 0.5 * lam / (l_max * math.log(10.0))
    assert decay_per_cycle >= required


# ---------------------------------------------------------- threshold mode

def test_threshold_monotone_distance_with_oracle_eps():
    d = 5
    sigma = np.diag(np.geomspace(1.0, 4.0, d))
    theta_star = np.array([1.0, -1.0, 0.5, -0.5, 2.0])
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((2000, d)) @ np.sqrt(sigma)
        y = X @ theta_star + 0.5 * rng.standard_normal(2000)

        def oracle_eps(j, theta, ghat, seed=seed):
            true_g = sigma[j, j] * 0.0 + (sigma @ (theta - theta_star))[j]
            return abs(ghat - true_g)

        distances = []

        def track_eps(j, theta, ghat):
            distances.append(np.linalg.norm(theta - theta_star))
            return oracle_eps(j, theta, ghat)

        cfg = SolverConfig(
            sampling="cyclic",
            estimator=rc.EstimatorSpec.mom(n_blocks=20),
            max_cycles=40,
            step_sizes=GivenLipschitz(sigma.diagonal()),
            threshold=SoftThreshold(eps=track_eps, lower=np.full(d, -10.0), upper=np.full(d, 10.0)),
            seed=seed,
            record_objective=False,
        )
        theta, _ = cgd_fit(X, y, Loss.square(), cfg)
        distances.append(np.linalg.norm(theta - theta_star))
        diffs = np.diff(distances)
        assert (diffs <= 1e-10).all()
        assert distances[-1] < distances[0]  # actually moved toward theta*


def test_threshold_box_projection_respected():
    X, y, _ = gaussian_regression(200, 3, seed=9)
    lo = np.full(3, -0.05)
    hi = np.full(3, 0.05)
    cfg = SolverConfig(
        estimator=rc.EstimatorSpec.erm(),
        max_cycles=50,
        step_sizes=GivenLipschitz((X * X).mean(axis=0)),
        threshold=SoftThreshold(eps=np.zeros(3), lower=lo, upper=hi),
        seed=0,
    )
    theta, _ = cgd_fit(X, y, Loss.square(), cfg)
    assert (theta >= lo - 1e-12).all() and (theta <= hi + 1e-12).all()


# ------------------------------------------------------------- gd baselines

def test_gd_vec_erm_descends_on_quadratic():
    X, y, _ = gaussian_regression(500, 4, noise=0.2, seed=10)
    lam = np.linalg.eigvalsh(X.T @ X / 500).max()
    from robustcgd.grad_estimators import GradientEstimator

    theta, record = gd_fit(X, y, Loss.square(), GradientEstimator.vec_erm(),
                           step=1.0 / lam, max_iters=40)
    diffs = np.diff(record.objective)
    # strict descent until the numerical floor, never an increase beyond rounding
    assert (diffs <= 1e-15 * record.objective[0]).all()
    assert (diffs[:10] < 0).all()


def test_gd_one_iteration_is_minus_step_gradient():
    X, y, _ = gaussian_regression(100, 3, seed=11)
    from robustcgd.grad_estimators import GradientEstimator, full_gradient

    step = 0.05
    theta, _ = gd_fit(X, y, Loss.square(), GradientEstimator.vec_erm(), step=step, max_iters=1)
    expected = -step * full_gradient(X, y, Loss.square(), np.zeros(3), GradientEstimator.vec_erm())
    assert np.array_equal(theta, expected)


def test_gd_gmom_one_block_equals_vec_erm_trajectory():
    X, y, _ = gaussian_regression(150, 3, seed=12)
    from robustcgd.grad_estimators import GradientEstimator

    a, _ = gd_fit(X, y, Loss.square(), GradientEstimator.vec_erm(), step=0.05, max_iters=25, seed=5)
    b, _ = gd_fit(X, y, Loss.square(), GradientEstimator.gmom(1), step=0.05, max_iters=25, seed=5)
    assert np.array_equal(a, b)


def test_gd_default_step_is_stable():
    X, y, _ = gaussian_regression(300, 4, noise=0.5, seed=13)
    from robustcgd.grad_estimators import GradientEstimator

    theta, record = gd_fit(X, y, Loss.square(), GradientEstimator.vec_erm(), max_iters=100)
    assert np.isfinite(theta).all()
    assert record.objective[-1] < record.objective[0]


# ---------------------------------------------------------------- oracle gd

def test_oracle_gd_fixed_point():
    oracle = OracleInfo(sigma=np.eye(3), theta_star=np.array([1.0, 2.0, 3.0]), noise_variance=1.0)
    theta, record = oracle_gd_fit(oracle, 0.5, 10, theta0=oracle.theta_star)
    assert np.array_equal(theta, oracle.theta_star)
    assert record.oracle_excess[-1] == 0.0


def test_oracle_gd_identity_converges_in_one_step():
    oracle = OracleInfo(sigma=np.eye(2), theta_star=np.array([1.0, -1.0]), noise_variance=1.0)
    theta, _ = oracle_gd_fit(oracle, 1.0, 1)
    assert theta == pytest.approx(oracle.theta_star, abs=1e-15)


def test_oracle_gd_closed_form_decay():
    # Sigma=diag(1,4), step 0.25: error components scale by (0.75^t, 0)
    oracle = OracleInfo(sigma=np.diag([1.0, 4.0]), theta_star=np.zeros(2), noise_variance=1.0)
    theta0 = np.array([1.0, 1.0])
    for t in (1, 3, 7):
        theta, _ = oracle_gd_fit(oracle, 0.25, t, theta0=theta0)
        assert theta == pytest.approx([0.75**t, 0.0], abs=1e-12)
