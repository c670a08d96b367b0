"""Binarization of representations into 0/1 treatment indicators.

The indicator matrix decides, per feature, which samples count as treated
(entry 1) versus control (entry 0). Both binarizers have zero derivative
almost everywhere, so the backward pass substitutes a clipped
straight-through rule: the upstream gradient passes unchanged where the
pre-binarized input lies inside ``[-ste_clip, +ste_clip]`` (boundary
inclusive) and is zeroed outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

KINDS = ("deterministic", "stochastic", "smooth")


@dataclass(frozen=True)
class BinarizeMode:
    """How representations are turned into indicators.

    ``deterministic`` thresholds at zero; ``stochastic`` draws each entry as
    1 with probability hard_sigmoid(value); ``smooth`` replaces the
    indicator by the hard-sigmoid itself and exists only so gradient
    diagnostics can compare analytic and finite-difference derivatives
    through this site (binarized outputs are not differentiable).
    """

    kind: str = "deterministic"
    ste_clip: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"binarize kind must be one of {KINDS}, got {self.kind!r}")
        if not self.ste_clip > 0:
            raise ValueError(f"ste_clip must be positive, got {self.ste_clip}")


def hard_sigmoid(x):
    """clip((x + 1) / 2, 0, 1); accepts scalars or arrays."""
    out = np.minimum(1.0, np.maximum(0.0, (np.asarray(x, dtype=np.float64) + 1.0) / 2.0))
    if out.ndim == 0:
        return float(out)
    return out


def ste_backward(upstream, inputs, mode: BinarizeMode = BinarizeMode()) -> np.ndarray:
    """Clipped straight-through rule: pass upstream where |input| <= ste_clip."""
    up = np.asarray(upstream, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    if up.shape != x.shape:
        raise T.ShapeError(f"ste_backward: shapes {up.shape} and {x.shape} differ")
    return up * (np.abs(x) <= mode.ste_clip)


def _check_finite(name: str, z: Tensor) -> None:
    if not np.all(np.isfinite(z.data)):
        raise T.EvaluationError(f"{name}: input contains non-finite values")


def _k_binarize_deterministic(tensors, *, ste_clip: float):
    (z,) = tensors
    out = np.where(z.data >= 0.0, 1.0, 0.0)

    def grad_fn(up):
        return (up * (np.abs(z.data) <= ste_clip),)

    return out, grad_fn


def _k_binarize_stochastic(tensors, *, uniforms: np.ndarray, ste_clip: float):
    (z,) = tensors
    if uniforms.shape != z.data.shape:
        raise T.ShapeError(f"binarize_stochastic: draw shape {uniforms.shape} != input shape {z.shape}")
    out = np.where(uniforms < hard_sigmoid(z.data), 1.0, 0.0)

    def grad_fn(up):
        return (up * (np.abs(z.data) <= ste_clip),)

    return out, grad_fn


def _k_binarize_smooth(tensors, *, ste_clip: float):
    (z,) = tensors
    out = hard_sigmoid(z.data)

    def grad_fn(up):
        # exact derivative of hard_sigmoid; kinks at |z| = 1
        return (up * 0.5 * (np.abs(z.data) <= 1.0),)

    return out, grad_fn


T.register_kernel("binarize_deterministic", _k_binarize_deterministic)
T.register_kernel("binarize_stochastic", _k_binarize_stochastic)
T.register_kernel("binarize_smooth", _k_binarize_smooth)


def binarize_deterministic(z: Tensor, mode: BinarizeMode = BinarizeMode()) -> Tensor:
    """1 where the entry is >= 0, else 0; zero itself lands on the 1 branch."""
    _check_finite("binarize_deterministic", z)
    return T.apply("binarize_deterministic", (z,), ste_clip=mode.ste_clip)


def binarize_stochastic(z: Tensor, rng: np.random.Generator,
                        mode: BinarizeMode = BinarizeMode(kind="stochastic")) -> Tensor:
    """Each entry is 1 with probability hard_sigmoid(entry), independently.

    Draws come from ``rng``, so the output is deterministic given the seed.
    Indicators are re-drawn on every forward pass.
    """
    _check_finite("binarize_stochastic", z)
    uniforms = rng.random(z.data.shape)
    return T.apply("binarize_stochastic", (z,), uniforms=uniforms, ste_clip=mode.ste_clip)


def binarize(z: Tensor, mode: BinarizeMode, rng: np.random.Generator | None = None) -> Tensor:
    if mode.kind == "deterministic":
        return binarize_deterministic(z, mode)
    if mode.kind == "stochastic":
        if rng is None:
            raise ValueError("stochastic binarization needs a seeded generator")
        return binarize_stochastic(z, rng, mode)
    _check_finite("binarize_smooth", z)
    return T.apply("binarize_smooth", (z,), ste_clip=mode.ste_clip)
