import numpy as np
import pytest

import robustcgd as rc
from robustcgd.losses import Loss
from robustcgd.solvers import GivenLipschitz, SolverConfig, cgd_fit


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jit kernels once so timing-sensitive tests stay clean."""
    rng = np.random.default_rng(0)
    X = rng.standard_normal((64, 3))
    y = X @ np.ones(3) + rng.standard_normal(64)
    state = rc.new_state(0)
    vals = rng.standard_normal(64)
    rc.estimate_mom(vals, 8, state)
    rc.estimate_tm(vals, 0.1)
    rc.estimate_ch(vals, 0.05)
    rc.median(vals)
    for est in (rc.EstimatorSpec.erm(), rc.EstimatorSpec.mom(n_blocks=8),
                rc.EstimatorSpec.tm(0.1), rc.EstimatorSpec.ch(0.05)):
        cfg = SolverConfig(estimator=est, max_cycles=2,
                           step_sizes=GivenLipschitz((X * X).mean(axis=0)), seed=0)
        cgd_fit(X, y, Loss.square(), cfg)
    yk = (y > 0).astype(int) + (y > 1).astype(int)
    cfg = SolverConfig(estimator=rc.EstimatorSpec.mom(n_blocks=8), max_cycles=2, seed=0)
    cgd_fit(X, yk, Loss.multilogit(3), cfg)


def gaussian_regression(n, d, noise=0.1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    theta = rng.standard_normal(d)
    y = X @ theta + noise * rng.standard_normal(n)
    return X, y, theta
