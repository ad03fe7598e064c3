"""Cross-checks between the numba kernels and the pure-numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from robustcgd import _scalar_numba as nb
from robustcgd import _scalar_numpy as npk
from robustcgd import new_state


@pytest.fixture()
def samples():
    rng = np.random.default_rng(0)
    return rng.standard_normal(500) * 3.0 + 1.0


def test_quickselect_agrees(samples):
    for k in (0, 7, 250, 499):
        a = nb.quickselect_inplace(samples.copy(), k)
        b = npk.quickselect_inplace(samples.copy(), k)
        assert a == b


def test_median_agrees(samples):
    assert nb.median_inplace(samples.copy()) == npk.median_inplace(samples.copy())
    odd = samples[:499]
    assert nb.median_inplace(odd.copy()) == npk.median_inplace(odd.copy())


def test_mom_agrees_on_pinned_permutation(samples):
    perm = np.random.default_rng(1).permutation(500).astype(np.int64)
    for k in (1, 7, 83, 500):
        a = nb.mom_perm_alloc(samples, perm, k)
        b = npk.mom_perm_alloc(samples, perm, k)
        assert a == pytest.approx(b, rel=1e-12)


def test_tm_agrees(samples):
    for trim in (0.0, 0.05, 0.25, 0.49):
        assert nb.tm_alloc(samples, trim) == pytest.approx(npk.tm_alloc(samples, trim), rel=1e-12)


def test_ch_agrees(samples):
    a, conv_a = nb.catoni_holland(samples, 0.01, 200, 1e-10)
    b, conv_b = npk.catoni_holland(samples, 0.01, 200, 1e-10)
    assert conv_a == conv_b
    assert a == pytest.approx(b, rel=1e-9)


def test_fisher_yates_both_uniform():
    # both backends produce valid, seeded, roughly uniform permutations
    for mod in (nb, npk):
        counts = np.zeros(3)
        for seed in range(600):
            perm = mod.fisher_yates(3, new_state(seed))
            assert sorted(perm.tolist()) == [0, 1, 2]
            counts[perm[0]] += 1
        assert np.abs(counts / 600 - 1 / 3).max() < 0.08


def test_cgd_cycle_agrees_for_deterministic_estimators():
    from robustcgd import _cgd_numba as cnb
    from robustcgd import _cgd_numpy as cnp

    rng = np.random.default_rng(2)
    n, d = 200, 3
    X = np.asfortranarray(rng.standard_normal((n, d)))
    y = rng.standard_normal(n)
    betas = 1.0 / (X * X).mean(axis=0)
    coords = np.array([0, 1, 2], dtype=np.int64)
    results = []
    for mod in (cnb, cnp):
        theta = np.zeros(d)
        inner = np.zeros(n)
        ok = mod.cgd_cycle(
            X, y, inner, theta, betas, coords, 0, 0.0,
            2, 1, 0.1, 0.01, 1e-8, 50,  # trimmed mean estimator
            new_state(0), np.empty(n), np.empty(n, dtype=np.int64),
            np.empty(1), np.empty(n),
        )
        assert ok
        results.append((theta.copy(), inner.copy()))
    assert results[0][0] == pytest.approx(results[1][0], rel=1e-12)
    assert results[0][1] == pytest.approx(results[1][1], rel=1e-12, abs=1e-14)


def test_multiclass_cycle_agrees_for_deterministic_estimators():
    from robustcgd import _cgd_numba as cnb
    from robustcgd import _cgd_numpy as cnp

    rng = np.random.default_rng(3)
    n, d, k = 150, 3, 4
    X = np.asfortranarray(rng.standard_normal((n, d)))
    y = rng.integers(0, k, size=n).astype(np.int64)
    betas = 4.0 / (X * X).mean(axis=0)  # 1/(gamma E[x^2]) with gamma = 1/4
    coords = np.array([2, 0, 1], dtype=np.int64)
    results = []
    for mod in (cnb, cnp):
        theta = np.zeros((d, k))
        inner = np.zeros((n, k))
        ok = mod.mc_cgd_cycle(
            X, y, inner, theta, betas, coords,
            2, 1, 0.1, 0.01, 1e-8, 50,  # trimmed mean estimator
            new_state(0), np.empty(n), np.empty(n, dtype=np.int64),
            np.empty(1), np.empty(n), np.empty((n, k)), np.empty(k),
        )
        assert ok
        risk = mod.mc_empirical_risk(inner, y)
        results.append((theta.copy(), risk))
    assert results[0][0] == pytest.approx(results[1][0], rel=1e-12, abs=1e-14)
    assert results[0][1] == pytest.approx(results[1][1], rel=1e-12)


def test_empirical_risk_agrees(samples):
    from robustcgd import _cgd_numba as cnb
    from robustcgd import _cgd_numpy as cnp

    y = np.sign(samples) * 1.0
    for code, tau in ((0, 0.0), (1, 1.35), (2, 0.0), (3, 0.0)):
        a = cnb.empirical_risk(samples * 0.3, y, code, tau)
        b = cnp.empirical_risk(samples * 0.3, y, code, tau)
        assert a == pytest.approx(b, rel=1e-12)


def _run_with_backend(backend, code):
    env = dict(os.environ, ROBUSTCGD_BACKEND=backend)
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True,
                          text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout.strip()


def test_env_flag_selects_backend():
    code = "import robustcgd; print(robustcgd.get_backend())"
    assert _run_with_backend("numpy", code) == "numpy"
    assert _run_with_backend("numba", code) == "numba"


def test_env_flag_rejects_unknown_backend():
    env = dict(os.environ, ROBUSTCGD_BACKEND="fortran")
    proc = subprocess.run(
        [sys.executable, "-c", "import robustcgd"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode != 0
    assert "ROBUSTCGD_BACKEND" in proc.stderr


def test_numpy_backend_full_fit_close_to_numba():
    code = """
import numpy as np
import robustcgd as rc
from robustcgd.losses import Loss
from robustcgd.solvers import SolverConfig, GivenLipschitz, cgd_fit
rng = np.random.default_rng(7)
X = rng.standard_normal((300, 4))
y = X @ np.array([1., -1., 0.5, 2.]) + 0.1 * rng.standard_normal(300)
cfg = SolverConfig(estimator=rc.EstimatorSpec.erm(), max_cycles=80,
                   step_sizes=GivenLipschitz((X * X).mean(axis=0)), seed=0)
theta, _ = cgd_fit(X, y, Loss.square(), cfg)
print(",".join(f"{t:.12f}" for t in theta))
"""
    a = _run_with_backend("numba", code)
    b = _run_with_backend("numpy", code)
    va = np.array([float(x) for x in a.split(",")])
    vb = np.array([float(x) for x in b.split(",")])
    assert va == pytest.approx(vb, abs=1e-10)
