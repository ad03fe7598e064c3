"""Scalar losses for linear learning: value, derivative and smoothness.

Each loss is gamma-smooth in its prediction argument (least absolute
deviation being the deliberate exception, kept as a baseline with a
subgradient), and the derivative grows at most polynomially with degree
q - 1. The solvers only ever touch the derivative through the per-sample
streams, so everything here is stateless.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

SQUARE = "square"
HUBER = "huber"
LOGISTIC = "logistic"
MULTILOGIT = "multilogit"
LAD = "lad"

# codes consumed by the jit kernels; multiclass goes through its own path
LOSS_CODES = {SQUARE: 0, HUBER: 1, LOGISTIC: 2, LAD: 3}

# classical 95%-efficiency default for the Huber threshold
DEFAULT_HUBER_TAU = 1.35


@dataclass(frozen=True)
class Loss:
    kind: str
    tau: float = DEFAULT_HUBER_TAU
    n_classes: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (SQUARE, HUBER, LOGISTIC, MULTILOGIT, LAD):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == HUBER and self.tau <= 0:
            raise ValueError("Huber threshold must be positive")
        if self.kind == MULTILOGIT:
            if self.n_classes is None or self.n_classes < 2:
                raise ValueError("multiclass logistic needs n_classes >= 2")

    @property
    def gamma(self):
        """Smoothness constant of the derivative."""
        if self.kind in (SQUARE, HUBER, LAD):
            return 1.0
        return 0.25

    @property
    def q(self):
        """Asymptotic polynomial degree of the loss."""
        return 2.0 if self.kind == SQUARE else 1.0

    @property
    def smooth(self):
        return self.kind != LAD

    def kernel_args(self):
        return LOSS_CODES[self.kind], self.tau

    @classmethod
    def square(cls):
        return cls(SQUARE)

    @classmethod
    def huber(cls, tau=DEFAULT_HUBER_TAU):
        return cls(HUBER, tau=tau)

    @classmethod
    def logistic(cls):
        return cls(LOGISTIC)

    @classmethod
    def multilogit(cls, n_classes):
        return cls(MULTILOGIT, n_classes=n_classes)

    @classmethod
    def lad(cls):
        return cls(LAD)


def _check_binary_labels(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("logistic labels must be in {-1, +1}")
    return y


def loss_value(loss, z, y):
    """Pointwise loss; broadcasts over arrays."""
    z = np.asarray(z, dtype=np.float64)
    if loss.kind == SQUARE:
        u = z - y
        out = 0.5 * u * u
    elif loss.kind == HUBER:
        u = z - y
        au = np.abs(u)
        out = np.where(au <= loss.tau, 0.5 * u * u, loss.tau * (au - 0.5 * loss.tau))
    elif loss.kind == LOGISTIC:
        y = _check_binary_labels(y)
        t = -y * z
        # softplus(t), stable for |t| up to overflow range
        out = np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))
    elif loss.kind == LAD:
        out = np.abs(z - y)
    else:
        raise ValueError("use multiclass_scores_and_grad for the multiclass loss")
    return out if out.ndim else float(out)


def loss_derivative(loss, z, y):
    """d loss / d z; the LAD case returns the subgradient sign(z - y)."""
    z = np.asarray(z, dtype=np.float64)
    if loss.kind == SQUARE:
        out = z - y
    elif loss.kind == HUBER:
        out = np.clip(z - y, -loss.tau, loss.tau)
    elif loss.kind == LOGISTIC:
        y = _check_binary_labels(y)
        t = y * z
        # -y * sigmoid(-t), evaluated on the stable side of the exponential
        e = np.exp(-np.abs(t))
        out = np.where(t >= 0, -y * e / (1.0 + e), -y / (1.0 + e))
    elif loss.kind == LAD:
        out = np.sign(z - y)
    else:
        raise ValueError("use multiclass_scores_and_grad for the multiclass loss")
    return out if out.ndim else float(out)


def multiclass_scores_and_grad(loss, scores, y):
    """Cross-entropy of softmax(scores) against class y, and its score gradient.

    Returns ``(value, softmax(scores) - onehot(y))``, stabilized through the
    log-sum-exp shift. The gradient components sum to zero.
    """
    if loss.kind != MULTILOGIT:
        raise ValueError("loss is not multiclass logistic")
    scores = np.asarray(scores, dtype=np.float64)
    k = loss.n_classes
    if scores.shape != (k,):
        raise ValueError(f"expected {k} scores, got shape {scores.shape}")
    y = int(y)
    if not 0 <= y < k:
        raise ValueError(f"class index {y} out of range for {k} classes")
    m = scores.max()
    shifted = scores - m
    expx = np.exp(shifted)
    total = expx.sum()
    value = math.log(total) - shifted[y]
    grad = expx / total
    grad[y] -= 1.0
    return float(value), grad


def softmax_rows(scores):
    """Row-wise softmax of an (n, k) score matrix, log-sum-exp stabilized."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    expx = np.exp(shifted)
    return expx / expx.sum(axis=1, keepdims=True)


def empirical_risk(loss, inner, y):
    """Mean loss of cached predictions ``inner`` against labels."""
    if loss.kind == MULTILOGIT:
        shifted = inner - inner.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        picked = shifted[np.arange(inner.shape[0]), y.astype(np.int64)]
        return float(np.mean(lse - picked))
    return float(np.mean(loss_value(loss, inner, y)))


def parse_loss(name, tau=DEFAULT_HUBER_TAU, n_classes=None):
    name = name.lower()
    if name == SQUARE:
        return Loss.square()
    if name == HUBER:
        return Loss.huber(tau)
    if name == LOGISTIC:
        return Loss.logistic()
    if name == MULTILOGIT:
        return Loss.multilogit(n_classes)
    if name == LAD:
        return Loss.lad()
    raise ValueError(f"unknown loss {name!r}")
