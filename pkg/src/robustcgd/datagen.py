"""Synthetic regression problems and corruption mechanisms.

Simulation settings (a)-(f): Gaussian features with a known covariance,
linear labels with Gaussian or heavy-tailed Student noise, and for (c)-(f)
a small fraction of rows replaced by structured outliers. Because the
generating distribution is known, the true risk and its minimizer are
available for oracle diagnostics.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataio import Column, Dataset, REGRESSION, CLASSIFICATION_TASKS

SETTINGS = ("a", "b", "c", "d", "e", "f")


def default_covariance(d):
    """Non-isotropic diagonal covariance, eigenvalues geometric in [1, 10]."""
    return np.diag(np.geomspace(1.0, 10.0, d))


def default_theta_star(d):
    signs = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
    return signs / math.sqrt(d)


@dataclass(frozen=True)
class SimSpec:
    n: int = 1000
    d: int = 5
    setting: str = "a"
    sigma: Optional[np.ndarray] = None  # covariance, defaults to geometric diag
    theta_star: Optional[np.ndarray] = None
    noise_scale: float = 1.0
    student_nu: float = 2.1
    corruption_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 0.0 <= self.corruption_rate < 0.5:
            raise ValueError("corruption_rate must be in [0, 0.5)")

    def resolved(self):
        sigma = default_covariance(self.d) if self.sigma is None else np.asarray(self.sigma, dtype=np.float64)
        theta = default_theta_star(self.d) if self.theta_star is None else np.asarray(self.theta_star, dtype=np.float64)
        if sigma.shape != (self.d, self.d):
            raise ValueError("covariance shape mismatch")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("covariance must be symmetric")
        return sigma, theta


@dataclass
class OracleInfo:
    """Everything needed to evaluate the true risk of a simulated problem."""

    sigma: np.ndarray
    theta_star: np.ndarray
    noise_variance: float
    outliers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def excess_risk(self, theta):
        diff = np.asarray(theta, dtype=np.float64) - self.theta_star
        return float(0.5 * diff @ self.sigma @ diff)

    def to_dict(self):
        return {
            "sigma": self.sigma.tolist(),
            "theta_star": self.theta_star.tolist(),
            "noise_variance": self.noise_variance,
            "outliers": self.outliers.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            sigma=np.asarray(payload["sigma"], dtype=np.float64),
            theta_star=np.asarray(payload["theta_star"], dtype=np.float64),
            noise_variance=float(payload["noise_variance"]),
            outliers=np.asarray(payload["outliers"], dtype=np.int64),
        )


def oracle_excess_risk(oracle, theta):
    """0.5 (theta - theta*)' Sigma (theta - theta*)."""
    return oracle.excess_risk(theta)


def student_t(rng, nu, size=None):
    """Student draws as a Gaussian over a scaled chi."""
    z = rng.standard_normal(size)
    v = rng.chisquare(nu, size)
    return z / np.sqrt(v / nu)


def simulate(spec):
    """Draw one dataset per the simulation spec; returns (Dataset, OracleInfo)."""
    sigma, theta_star = spec.resolved()
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.d

    X = rng.standard_normal((n, d)) @ chol.T
    if spec.setting == "a":
        noise = spec.noise_scale * rng.standard_normal(n)
        noise_var = spec.noise_scale**2
    else:
        noise = spec.noise_scale * student_t(rng, spec.student_nu, n)
        noise_var = spec.noise_scale**2 * spec.student_nu / (spec.student_nu - 2.0)
    y = X @ theta_star + noise

    outliers = np.empty(0, dtype=np.int64)
    if spec.setting in ("c", "d", "e", "f") and spec.corruption_rate > 0:
        n_out = int(spec.corruption_rate * n)
        outliers = np.sort(rng.choice(n, size=n_out, replace=False)).astype(np.int64)
        inlier_mask = np.ones(n, dtype=bool)
        inlier_mask[outliers] = False
        y_max = float(np.abs(y[inlier_mask]).max())
        lam = float(np.linalg.eigvalsh(sigma).max())
        m = len(outliers)
        if spec.setting in ("c", "d"):
            X[outliers] = lam
            y[outliers] = 2.0 * y_max
            if spec.setting == "d":
                flips = rng.random(m) < 0.5
                y[outliers] = np.where(flips, -y[outliers], y[outliers])
        elif spec.setting == "e":
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            X[outliers] = 10.0 * lam * v + rng.standard_normal((m, d))
            y[outliers] = rng.integers(0, 2, size=m).astype(np.float64)
        else:  # f
            raw = rng.standard_normal((m, d))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            X[outliers] = 10.0 * lam * raw
            rademacher = np.where(rng.random(m) < 0.5, -1.0, 1.0)
            y[outliers] = y_max * (rademacher + rng.uniform(-0.2, 0.2, size=m))

    columns = [Column(name=f"x{j}", kind="continuous") for j in range(d)]
    dataset = Dataset(X=np.asfortranarray(X), y=y, columns=columns, task=REGRESSION)
    oracle = OracleInfo(sigma=sigma, theta_star=theta_star, noise_variance=noise_var, outliers=outliers)
    return dataset, oracle


@dataclass(frozen=True)
class CorruptionSpec:
    rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 0.5:
            raise ValueError("corruption rate must be in [0, 0.5)")


def corrupt_dataset(dataset, spec, rng=None, mechanisms=(0, 1, 2)):
    """Replace a fraction of rows with uninformative values.

    Column statistics are taken on the pre-corruption data; the label column
    is corrupted alongside the features (as continuous for regression, as a
    categorical resample for classification). Continuous rows are replaced,
    with equal probability over ``mechanisms``, by (0) heavy-tailed noise
    around a resampled value, (1) a fixed 5-sigma direction plus Gaussian
    noise, or (2) a 5-sigma step along a random unit vector. Returns the
    corrupted dataset and the outlier row indices.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, d = dataset.X.shape
    n_out = int(spec.rate * n)
    if n_out == 0:
        return dataset.copy(), np.empty(0, dtype=np.int64)

    X = np.array(dataset.X)
    y = np.array(dataset.y, dtype=np.float64)
    outliers = np.sort(rng.choice(n, size=n_out, replace=False)).astype(np.int64)

    categorical = [j for j, col in enumerate(dataset.columns) if col.kind == "categorical"]
    continuous = [j for j, col in enumerate(dataset.columns) if col.kind == "continuous"]
    label_is_continuous = dataset.task == REGRESSION

    # continuous block includes the label for regression tasks
    cont_cols = [X[:, j] for j in continuous]
    if label_is_continuous:
        cont_cols.append(y)
    n_cont = len(cont_cols)
    mu = np.array([c.mean() for c in cont_cols])
    sd = np.array([c.std() for c in cont_cols])
    unit = rng.standard_normal(n_cont)
    unit /= max(np.linalg.norm(unit), 1e-300)

    for i in outliers:
        for j in categorical:
            X[i, j] = rng.choice(X[:, j])
        if not label_is_continuous:
            y[i] = rng.choice(dataset.y)
        if n_cont:
            mech = mechanisms[rng.integers(0, len(mechanisms))]
            if mech == 0:
                picks = np.array([rng.choice(c) for c in cont_cols])
                row = picks + 5.0 * sd * student_t(rng, 2.1, n_cont)
            elif mech == 1:
                row = mu + 5.0 * sd * unit + rng.standard_normal(n_cont)
            else:
                w = rng.standard_normal(n_cont)
                w /= max(np.linalg.norm(w), 1e-300)
                row = mu + 5.0 * sd * w
            for pos, j in enumerate(continuous):
                X[i, j] = row[pos]
            if label_is_continuous:
                y[i] = row[-1]

    if dataset.task in CLASSIFICATION_TASKS:
        y = y.astype(dataset.y.dtype)
    corrupted = Dataset(
        X=np.asfortranarray(X), y=y, columns=list(dataset.columns), task=dataset.task
    )
    return corrupted, outliers
