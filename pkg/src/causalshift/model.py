"""Fully connected feature extractor and linear classifier.

The extractor chains affine layers with relu between them and none after
the last, so representations keep both signs (the binarizer needs them).
Layer widths run input -> hidden_widths... -> repr_width; the classifier
maps repr_width -> num_classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    hidden_widths: tuple[int, ...] = (64, 32)
    repr_width: int = 8
    num_classes: int = 2

    def __post_init__(self):
        widths = (*self.hidden_widths, self.repr_width, self.num_classes)
        if any(int(w) < 1 for w in widths):
            raise ValueError(f"model widths must be positive, got {widths}")


@dataclass
class ModelParams:
    """Extractor layers as (weight, bias) pairs plus the classifier pair.

    Biases are width-length vectors, lifted over the sample axis with the
    replicate_rows kernel so no arithmetic kernel ever broadcasts beyond
    scalar-with-tensor.
    """

    extractor: list[tuple[Tensor, Tensor]] = field(default_factory=list)
    classifier: tuple[Tensor, Tensor] = None

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(self.extractor):
            out.append((f"extractor.{i}.weight", w))
            out.append((f"extractor.{i}.bias", b))
        out.append(("classifier.weight", self.classifier[0]))
        out.append(("classifier.bias", self.classifier[1]))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    @property
    def input_width(self) -> int:
        return self.extractor[0][0].shape[0]

    @property
    def repr_width(self) -> int:
        return self.extractor[-1][0].shape[1]

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors():
            t.requires_grad = flag


def init_params(cfg: ModelConfig, input_width: int, rng: np.random.Generator) -> ModelParams:
    """Gaussian weights with std sqrt(2 / fan_in); biases zero."""
    if input_width < 1:
        raise ValueError(f"input width must be positive, got {input_width}")
    widths = [int(input_width), *map(int, cfg.hidden_widths), int(cfg.repr_width)]
    extractor = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        extractor.append((Tensor(w, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True)))
    cw = rng.normal(0.0, np.sqrt(2.0 / widths[-1]), size=(widths[-1], int(cfg.num_classes)))
    classifier = (Tensor(cw, requires_grad=True), Tensor(np.zeros(cfg.num_classes), requires_grad=True))
    return ModelParams(extractor=extractor, classifier=classifier)


def _affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return T.add(T.matmul(x, weight), T.replicate_rows(bias, rows=x.shape[0]))


def extract_features(params: ModelParams, x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise T.ShapeError(f"extract_features: input must be 2-D, got shape {x.shape}")
    if x.shape[1] != params.input_width:
        raise T.ShapeError(
            f"extract_features: input width {x.shape[1]} != expected {params.input_width}"
        )
    out = x
    last = len(params.extractor) - 1
    for i, (w, b) in enumerate(params.extractor):
        out = _affine(out, w, b)
        if i != last:
            out = T.relu(out)
    return out


def classify(params: ModelParams, z: Tensor) -> Tensor:
    w, b = params.classifier
    if z.data.ndim != 2 or z.shape[1] != w.shape[0]:
        raise T.ShapeError(
            f"classify: representation shape {z.shape} does not match classifier input {w.shape[0]}"
        )
    return _affine(z, w, b)


def weighted_ce(logits: Tensor, labels, weights: Tensor) -> Tensor:
    """(1/n) sum_i w_i * nll_i with nll the softmax negative log-likelihood."""
    y = np.asarray(labels)
    n = logits.shape[0]
    if y.shape != (n,):
        raise T.ShapeError(f"weighted_ce: expected {n} labels, got shape {y.shape}")
    if weights.shape != (n,):
        raise T.ShapeError(f"weighted_ce: expected {n} weights, got shape {weights.shape}")
    per_sample = T.softmax_cross_entropy(logits, y)
    return T.scale(T.sum_all(T.multiply(weights, per_sample)), 1.0 / n)
