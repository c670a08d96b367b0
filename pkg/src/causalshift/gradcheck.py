"""Finite-difference validation of every analytic gradient path.

Each component draws seeded random instances, runs the engine's backward
pass, and compares against central finite differences of the same forward
function. Relative error uses a unit floor:

    err = max_i |a_i - f_i| / max(|a_i|, |f_i|, 1)

Binarized indicators have zero derivative almost everywhere, so their
surrogate gradient rule cannot be checked against finite differences of
the production forward. The components that exercise the indicator site
therefore run the smooth surrogate binarizer (hard-sigmoid forward, its
exact derivative backward), which checks the chain rule through that site;
the production straight-through rule itself is asserted exactly in unit
tests. The weight-block component runs the production deterministic
binarizer, because indicators do not depend on the weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .balance import BalanceInputs, balance_loss
from .binarize import BinarizeMode
from .model import ModelConfig, ModelParams, init_params
from .objective import ObjectiveConfig, total_loss
from .tensor import Tensor

TOLERANCE = 1e-4
TRIALS = 20


@dataclass
class ComponentResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _rel_err(analytic: np.ndarray, estimate: np.ndarray) -> float:
    analytic, estimate = np.asarray(analytic, float), np.asarray(estimate, float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(estimate)), 1.0)
    return float(np.max(np.abs(analytic - estimate) / denom)) if analytic.size else 0.0


def _nudge_from(values: np.ndarray, point: float, margin: float = 1e-3) -> np.ndarray:
    """Push entries at least ``margin`` away from ``point``."""
    close = np.abs(values - point) < margin
    return np.where(close, point + 10 * margin, values)


def _kernel_component(kernel: str, make_inputs: Callable[[np.random.Generator], tuple],
                      params: dict | None = None):
    params = params or {}

    def run(rng: np.random.Generator) -> float:
        arrays = make_inputs(rng)
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        T.reset_graph()
        grads = T.backward(T.sum_all(T.square(T.apply(kernel, tensors, **params))))
        worst = 0.0
        for i, target in enumerate(tensors):
            def f(p, i=i):
                T.reset_graph()
                probe = [Tensor(p if j == i else arrays[j]) for j in range(len(arrays))]
                return T.sum_all(T.square(T.apply(kernel, probe, **params))).item()

            worst = max(worst, _rel_err(grads[target], T.finite_diff(f, target, h=1e-5)))
        return worst

    return run


def _make_kernel_components() -> dict[str, Callable]:
    return {
        "matmul": _kernel_component("matmul", lambda r: (r.normal(size=(3, 4)), r.normal(size=(4, 2)))),
        "add": _kernel_component("add", lambda r: (r.normal(size=(3, 4)), r.normal(size=(3, 4)))),
        "subtract": _kernel_component("subtract", lambda r: (r.normal(size=(3, 4)), r.normal(size=(3, 4)))),
        "multiply": _kernel_component("multiply", lambda r: (r.normal(size=(3, 4)), r.normal(size=(3, 4)))),
        "divide": _kernel_component(
            "divide",
            lambda r: (r.normal(size=(3, 4)),
                       np.sign(r.normal(size=(3, 4))) * r.uniform(0.5, 2.0, size=(3, 4)))),
        "relu": _kernel_component("relu", lambda r: (_nudge_from(r.normal(size=7), 0.0),)),
        "sum": _kernel_component("sum", lambda r: (r.normal(size=6),)),
        "square": _kernel_component("square", lambda r: (r.normal(size=5),)),
        "scale": _kernel_component("scale", lambda r: (r.normal(size=5),), {"factor": 1.7}),
        "column_select": _kernel_component(
            "column_select", lambda r: (r.normal(size=(4, 5)),), {"columns": [0, 2, 4]}),
        "column_concat": _kernel_component(
            "column_concat", lambda r: (r.normal(size=(4, 2)), r.normal(size=(4, 3)))),
        "replicate_rows": _kernel_component(
            "replicate_rows", lambda r: (r.normal(size=5),), {"rows": 3}),
        "softmax_cross_entropy": _softmax_component,
    }


def _softmax_component(rng: np.random.Generator) -> float:
    logits0 = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, size=6)
    logits = Tensor(logits0, requires_grad=True)
    T.reset_graph()
    grads = T.backward(T.sum_all(T.softmax_cross_entropy(logits, labels)))

    def f(p):
        T.reset_graph()
        return T.sum_all(T.softmax_cross_entropy(Tensor(p), labels)).item()

    return _rel_err(grads[logits], T.finite_diff(f, logits, h=1e-5))


def _balanced_indicators(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    # half-and-half columns keep both groups far above the skip floor
    return np.array([rng.permutation([1.0] * (n // 2) + [0.0] * (n - n // 2)) for _ in range(d)]).T


def _balance_w_component(rng: np.random.Generator) -> float:
    n, d = 8, 3
    z0 = rng.normal(size=(n, d))
    b0 = _balanced_indicators(rng, n, d)
    w0 = rng.uniform(0.7, 1.4, size=n)
    w = Tensor(w0, requires_grad=True)
    T.reset_graph()
    grads = T.backward(balance_loss(BalanceInputs(Tensor(z0), Tensor(b0), w)))

    def f(p):
        T.reset_graph()
        return balance_loss(BalanceInputs(Tensor(z0), Tensor(b0), Tensor(p))).item()

    return _rel_err(grads[w], T.finite_diff(f, w, h=1e-5))


def _balance_z_component(rng: np.random.Generator) -> float:
    from .binarize import binarize

    n, d = 8, 3
    z0 = 0.6 * rng.normal(size=(n, d))
    z0 = _nudge_from(_nudge_from(z0, 1.0), -1.0)  # away from hard-sigmoid kinks
    w0 = rng.uniform(0.7, 1.4, size=n)
    mode = BinarizeMode(kind="smooth")

    def graph(z: Tensor) -> Tensor:
        b = binarize(z, mode)
        return balance_loss(BalanceInputs(z, b, Tensor(w0), allow_fractional_indicators=True))

    z = Tensor(z0, requires_grad=True)
    T.reset_graph()
    grads = T.backward(graph(z))

    def f(p):
        T.reset_graph()
        return graph(Tensor(p)).item()

    return _rel_err(grads[z], T.finite_diff(f, z, h=1e-5))


def _loss_instance(rng: np.random.Generator):
    n, p = 6, 3
    params = init_params(ModelConfig(hidden_widths=(4,), repr_width=3, num_classes=2), p, rng)
    x = rng.normal(size=(n, p))
    y = rng.integers(0, 2, size=n)
    omega0 = rng.uniform(0.8, 1.3, size=n)
    cfg = ObjectiveConfig(lambda1=0.3, lambda2=0.05, lambda3=0.4)
    return params, x, y, omega0, cfg


def _pack(params: ModelParams) -> np.ndarray:
    return np.concatenate([t.data.ravel() for t in params.tensors()])


def _unpack(params: ModelParams, flat: np.ndarray) -> None:
    start = 0
    for t in params.tensors():
        stop = start + t.data.size
        t.data = flat[start:stop].reshape(t.data.shape).copy()
        start = stop


def _total_loss_theta_component(rng: np.random.Generator) -> float:
    params, x, y, omega0, cfg = _loss_instance(rng)
    mode = BinarizeMode(kind="smooth")
    omega = Tensor(omega0)
    T.reset_graph()
    T.backward(total_loss(params, omega, x, y, cfg, mode).total)
    analytic = np.concatenate([t.grad.ravel() for t in params.tensors()])
    theta0 = _pack(params)

    def f(vec):
        T.reset_graph()
        _unpack(params, vec)
        value = total_loss(params, omega, x, y, cfg, mode).total.item()
        _unpack(params, theta0)
        return value

    return _rel_err(analytic, T.finite_diff(f, theta0, h=1e-5))


def _total_loss_omega_component(rng: np.random.Generator) -> float:
    params, x, y, omega0, cfg = _loss_instance(rng)
    mode = BinarizeMode(kind="deterministic")
    params.set_requires_grad(False)
    omega = Tensor(omega0, requires_grad=True)
    T.reset_graph()
    grads = T.backward(total_loss(params, omega, x, y, cfg, mode).total)

    def f(p):
        T.reset_graph()
        return total_loss(params, Tensor(p), x, y, cfg, mode).total.item()

    return _rel_err(grads[omega], T.finite_diff(f, omega, h=1e-5))


def components() -> dict[str, Callable[[np.random.Generator], float]]:
    out = dict(_make_kernel_components())
    out["balance_G_wrt_weights"] = _balance_w_component
    out["balance_G_wrt_features_ste_site"] = _balance_z_component
    out["total_loss_wrt_params"] = _total_loss_theta_component
    out["total_loss_wrt_weights"] = _total_loss_omega_component
    return out


def run_suite(seed: int = 0, trials: int = TRIALS, tolerance: float = TOLERANCE,
              perturb: str | None = None) -> list[ComponentResult]:
    """Run every component on ``trials`` seeded instances.

    ``perturb`` names a component whose analytic error is artificially
    inflated; it exists so the failure path itself is testable.
    """
    results = []
    for index, (name, component) in enumerate(components().items()):
        worst = 0.0
        for trial in range(trials):
            rng = np.random.default_rng(seed + 1000 * index + trial)
            worst = max(worst, float(component(rng)))
        if perturb == name:
            worst += 1.0
        results.append(ComponentResult(name=name, max_rel_err=worst, tolerance=tolerance))
    T.reset_graph()
    return results
