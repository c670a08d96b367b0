"""Moment-balancing objective over per-sample weights.

Each representation feature in turn plays the role of a treatment: samples
whose indicator entry is 1 form the treated group, the rest the control
group. The objective sums, over features, the squared distance between the
weighted means of all *other* features in the two groups:

    G = sum_i || Zo_i^T (W o b_i) / (W.b_i + eps)
               - Zo_i^T (W o (1 - b_i)) / (W.(1 - b_i) + eps) ||^2

where Zo_i drops column i of the representation matrix, b_i is column i of
the indicator matrix, and ``o`` is the elementwise product. Driving G to
zero equalizes the groups' first moments for every feature, which removes
confounded correlations from the weighted sample.

The group means use the real-valued representations; the indicator matrix
enters only through group membership. ``eps`` keeps empty groups harmless:
a group with (weighted) size below eps contributes a mean of about zero
instead of aborting the step, since finite mini-batches can violate
overlap. G is differentiable in the weights and, through the numerators
and the straight-through indicator path, in the representations.

A feature whose treated or control group is too light is skipped for that
batch: the mean of a near-empty group is not estimable, and its gradient
through the indicator path scales like 1/eps, which blows up the
extractor parameters. The floor is the larger of half an average sample
and 5% of the total weight; both terms are relative to the weight scale,
so rescaling all weights changes nothing, and the half-sample bound keeps
single-sample groups meaningful in tiny problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

DEFAULT_EPS = 1e-8

# a group must weigh at least this fraction of the mean sample weight...
MIN_GROUP_WEIGHT_FRACTION = 0.5
# ...and at least this fraction of the batch's total weight
MIN_GROUP_BATCH_FRACTION = 0.05


@dataclass
class BalanceInputs:
    """Representations Z (n x d), indicators B (n x d), weights W (n,).

    ``allow_fractional_indicators`` admits B entries inside [0, 1]; it
    exists only for gradient diagnostics that swap the binarizer for its
    smooth surrogate. Production indicators are exactly 0 or 1.
    """

    Z: Tensor
    B: Tensor
    W: Tensor
    eps: float = DEFAULT_EPS
    allow_fractional_indicators: bool = False


def _validate(inputs: BalanceInputs) -> tuple[int, int]:
    Z, B, W = inputs.Z, inputs.B, inputs.W
    if Z.data.ndim != 2:
        raise T.ShapeError(f"balance: Z must be 2-D, got shape {Z.shape}")
    if B.shape != Z.shape:
        raise T.ShapeError(f"balance: Z shape {Z.shape} != B shape {B.shape}")
    n, d = Z.shape
    if W.shape != (n,):
        raise T.ShapeError(f"balance: W shape {W.shape} does not match {n} samples")
    if d < 2:
        raise T.ShapeError("balance: needs at least 2 features (each feature is balanced against the others)")
    if inputs.allow_fractional_indicators:
        if np.any((B.data < 0.0) | (B.data > 1.0)):
            raise ValueError("balance: surrogate indicator entries must lie in [0, 1]")
    elif not np.all((B.data == 0.0) | (B.data == 1.0)):
        raise ValueError("balance: indicator entries must be exactly 0 or 1")
    if np.any(W.data < 0.0):
        raise ValueError("balance: weights must be non-negative")
    if inputs.eps < 0.0:
        raise ValueError(f"balance: eps must be non-negative, got {inputs.eps}")
    return n, d


def group_means(Z: Tensor, b_col: Tensor, weights: Tensor, feature: int,
                eps: float = DEFAULT_EPS) -> tuple[Tensor, Tensor]:
    """Weighted means of all other features in the treated and control groups.

    ``b_col`` must be column ``feature`` of the indicator matrix. Returns a
    pair of (d-1)-vectors as graph tensors.
    """
    d = Z.shape[1]
    others = [j for j in range(d) if j != feature]
    Zo = T.column_select(Z, others)
    wb = T.multiply(weights, b_col)
    wc = T.multiply(weights, T.subtract(1.0, b_col))
    treated = T.divide(T.matmul(wb, Zo), T.add(T.sum_all(wb), eps))
    control = T.divide(T.matmul(wc, Zo), T.add(T.sum_all(wc), eps))
    return treated, control


def balance_loss(inputs: BalanceInputs) -> Tensor:
    """The scalar balancing objective G as a graph tensor.

    Features with a group below the weight floor are skipped for this
    batch; if every feature is degenerate, G is the constant zero.
    """
    n, d = _validate(inputs)
    w_data = inputs.W.data
    total_w = float(np.sum(w_data))
    floor = max(MIN_GROUP_WEIGHT_FRACTION * total_w / n, MIN_GROUP_BATCH_FRACTION * total_w)
    total = None
    for i in range(d):
        b_data = inputs.B.data[:, i]
        if float(w_data @ b_data) < floor or float(w_data @ (1.0 - b_data)) < floor:
            continue
        b_col = T.column_select(inputs.B, i)
        treated, control = group_means(inputs.Z, b_col, inputs.W, i, inputs.eps)
        term = T.sum_all(T.square(T.subtract(treated, control)))
        total = term if total is None else T.add(total, term)
    if total is None:
        return T.as_tensor(0.0)
    return total
