"""Evaluation: accuracy, feature importance and rank agreement with the mask.

Feature importance is the mean absolute gradient of each sample's
true-class logit with respect to that input feature. The importance
vector is compared against the causal ground-truth mask two ways: Spearman
rank correlation (average ranks for ties) and precision of the top-k
features, k being the number of causal columns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .model import classify, extract_features
from .scm import Dataset
from .tensor import Tensor
from .train import predict


class UndefinedCorrelationError(ValueError):
    """Rank correlation is undefined for a constant vector."""


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"accuracy: shapes {pred.shape} and {truth.shape} must match and be non-empty")
    return float(np.mean(pred == truth))


def input_gradient_importance(state, ds: Dataset) -> np.ndarray:
    """Mean over samples of |d logit_{y_i} / d x_{i,j}| per feature j."""
    if len(ds) == 0:
        raise ValueError("importance: dataset is empty")
    if ds.width != state.input_width:
        raise T.ShapeError(
            f"importance: dataset width {ds.width} does not match model input {state.input_width}"
        )
    x = Tensor(ds.X, requires_grad=True)
    logits = classify(state.params, extract_features(state.params, x))
    k = logits.shape[1]
    onehot = np.zeros((len(ds), k))
    onehot[np.arange(len(ds)), np.asarray(ds.y, int)] = 1.0
    # rows are independent, so summing the selected logits gives each row's
    # own-logit gradient in a single backward pass
    grads = T.backward(T.sum_all(T.multiply(logits, Tensor(onehot))))
    return np.abs(grads[x]).mean(axis=0)


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError(f"spearman: needs two equal-length vectors of size >= 2, got {a.shape} and {b.shape}")
    ra, rb = rankdata(a), rankdata(b)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise UndefinedCorrelationError("spearman: constant vector has zero rank variance")
    return float(np.corrcoef(ra, rb)[0, 1])


def causal_precision(importance, mask) -> float:
    """Fraction of the top-k important features (k = mask ones) that are causal."""
    importance, mask = np.asarray(importance, float), np.asarray(mask)
    if importance.shape != mask.shape:
        raise ValueError(f"causal_precision: shapes {importance.shape} and {mask.shape} differ")
    k = int(mask.sum())
    if k < 1:
        raise ValueError("causal_precision: mask must select at least one feature")
    top = np.argsort(-importance, kind="stable")[:k]  # ties resolve to lower index
    return float(np.mean(mask[top] == 1))


@dataclass
class LossComponents:
    wce: float
    g: float
    pen2: float
    pen3: float


@dataclass
class MetricsReport:
    source_accuracy: float | None
    target_accuracy: float | None
    final_loss_components: LossComponents | None
    importance: list[float]
    spearman_vs_mask: float | None
    causal_precision: float | None
    seed: int

    def to_json(self, config_echo: dict[str, str] | None = None) -> str:
        payload = asdict(self)
        if config_echo is not None:
            payload["config"] = dict(sorted(config_echo.items()))
        return json.dumps(payload, indent=2) + "\n"


def evaluate(state, ds: Dataset, final_loss_components: LossComponents | None = None) -> MetricsReport:
    """Accuracy plus importance metrics; mask metrics are None without a mask."""
    acc = accuracy(predict(state, ds.X), ds.y)
    importance = input_gradient_importance(state, ds)
    spearman_vs_mask = None
    precision = None
    if ds.causal_mask is not None:
        spearman_vs_mask = spearman(importance, ds.causal_mask)
        precision = causal_precision(importance, ds.causal_mask)
    return MetricsReport(
        source_accuracy=acc if ds.domain == "source" else None,
        target_accuracy=acc if ds.domain == "target" else None,
        final_loss_components=final_loss_components,
        importance=[float(v) for v in importance],
        spearman_vs_mask=spearman_vs_mask,
        causal_precision=precision,
        seed=state.seed,
    )
