"""The full training objective.

    total = weighted_ce + lambda1 * G
            + lambda2 * (1/n) ||W||^2
            + lambda3 * (mean(W) - 1)^2

Weights are parametrized as W_i = omega_i^2, which keeps them non-negative
by construction. The lambda2 term damps weight variance; the lambda3 term
anchors the mean weight at one so the weights cannot collapse to zero.
Both penalties use the batch size n so their scale does not drift with
batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .balance import DEFAULT_EPS, BalanceInputs, balance_loss
from .binarize import BinarizeMode, binarize
from .model import ModelParams, classify, extract_features, weighted_ce
from .tensor import Tensor


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda1: float = 0.1
    lambda2: float = 0.001
    lambda3: float = 0.5
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def sample_weights(omega: Tensor) -> Tensor:
    """W_i = omega_i^2; non-negative by construction, dW/domega = 2 omega."""
    return T.square(omega)


@dataclass
class LossTerms:
    """The scalar objective plus its components as plain floats."""

    total: Tensor
    wce: float
    g: float
    pen2: float
    pen3: float


def total_loss(params: ModelParams, omega: Tensor, x, labels,
               cfg: ObjectiveConfig, mode: BinarizeMode = BinarizeMode(),
               rng: np.random.Generator | None = None) -> LossTerms:
    """Assemble the objective for one batch as a graph scalar.

    ``omega`` must be indexed to the batch members. Terms with a zero
    multiplier are skipped, so the all-zeros configuration is exactly the
    unweighted empirical risk when the weights are one.
    """
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("total_loss: empty batch")
    n = y.shape[0]
    xt = T.as_tensor(x)
    z = extract_features(params, xt)
    w = sample_weights(omega)
    logits = classify(params, z)
    wce = weighted_ce(logits, y, w)

    total = wce
    g_value = 0.0
    if cfg.lambda1 > 0.0:
        b = binarize(z, mode, rng)
        g = balance_loss(BalanceInputs(Z=z, B=b, W=w, eps=cfg.eps,
                                       allow_fractional_indicators=mode.kind == "smooth"))
        g_value = float(g.data)
        total = T.add(total, T.scale(g, cfg.lambda1))

    pen2_value = 0.0
    if cfg.lambda2 > 0.0:
        pen2 = T.scale(T.sum_all(T.square(w)), cfg.lambda2 / n)
        pen2_value = float(pen2.data)
        total = T.add(total, pen2)

    pen3_value = 0.0
    if cfg.lambda3 > 0.0:
        pen3 = T.scale(T.square(T.subtract(T.scale(T.sum_all(w), 1.0 / n), 1.0)), cfg.lambda3)
        pen3_value = float(pen3.data)
        total = T.add(total, pen3)

    return LossTerms(total=total, wce=float(wce.data), g=g_value,
                     pen2=pen2_value, pen3=pen3_value)
