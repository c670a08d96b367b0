"""Alternating mini-batch SGD over model parameters and sample weights.

Each iteration takes one gradient step on the model parameters with the
weights fixed, then one step on the weight parameters omega with the model
fixed. Weights live globally (one omega per source sample) and are
addressed through shuffled batch membership; the balancing term and the
penalties see only the batch slice. Training touches source data only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .binarize import BinarizeMode
from .model import ModelConfig, ModelParams, classify, extract_features, init_params
from .objective import LossTerms, ObjectiveConfig, total_loss
from .scm import Dataset
from .tensor import Tensor


class DataError(ValueError):
    """Training data violates a precondition."""


class DivergenceError(RuntimeError):
    """The loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr_theta: float = 0.05
    lr_omega: float = 0.05
    seed: int = 0
    convergence_tol: float = 1e-6
    max_iterations: int = 10**9
    alternate_per: str = "batch"
    freeze_weights: bool = False
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    binarize: BinarizeMode = field(default_factory=BinarizeMode)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.max_iterations < 1:
            raise ValueError("epochs, batch_size and max_iterations must be positive")
        if not (self.lr_theta >= 0 and self.lr_omega >= 0):
            raise ValueError("learning rates must be non-negative")
        if self.convergence_tol < 0:
            raise ValueError(f"convergence_tol must be non-negative, got {self.convergence_tol}")
        if self.alternate_per not in ("batch", "epoch"):
            raise ValueError(f"alternate_per must be 'batch' or 'epoch', got {self.alternate_per!r}")


@dataclass
class ModelState:
    params: ModelParams
    omega: np.ndarray
    seed: int
    input_width: int
    config: TrainConfig
    rng: np.random.Generator = field(repr=False, default=None)

    def weights(self) -> np.ndarray:
        return self.omega**2


@dataclass
class HistoryRecord:
    iteration: int
    wce: float
    g: float
    pen2: float
    pen3: float
    total: float


@dataclass
class TrainHistory:
    records: list[HistoryRecord] = field(default_factory=list)

    def append(self, iteration: int, terms: LossTerms) -> None:
        self.records.append(HistoryRecord(
            iteration=iteration, wce=terms.wce, g=terms.g,
            pen2=terms.pen2, pen3=terms.pen3, total=float(terms.total.data),
        ))

    def __len__(self) -> int:
        return len(self.records)

    def csv_lines(self) -> list[str]:
        lines = ["iteration,wce,g,pen2,pen3,total"]
        for r in self.records:
            values = (format(v, ".17g") for v in (r.wce, r.g, r.pen2, r.pen3, r.total))
            lines.append(f"{r.iteration}," + ",".join(values))
        return lines


def init_state(cfg: TrainConfig, input_width: int, n_samples: int) -> ModelState:
    """Fresh parameters from cfg.seed; omega starts at ones so W(0) = 1."""
    if n_samples < 1:
        raise DataError(f"need at least one sample, got {n_samples}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.model, input_width, rng)
    return ModelState(params=params, omega=np.ones(n_samples), seed=cfg.seed,
                      input_width=input_width, config=cfg, rng=rng)


class _StopTraining(Exception):
    pass


def train(cfg: TrainConfig, source: Dataset) -> tuple[ModelState, TrainHistory]:
    """Run Algorithm-style alternating SGD on the source domain only.

    Stops when the epoch-mean total loss changes by less than
    ``convergence_tol`` or when ``max_iterations`` alternating iterations
    have run, whichever happens first.
    """
    if len(source) == 0:
        raise DataError("training dataset is empty")
    if cfg.batch_size > len(source):
        raise DataError(f"batch_size {cfg.batch_size} exceeds the {len(source)} source samples")
    n = len(source)
    state = init_state(cfg, source.width, n)
    history = TrainHistory()
    iteration = 0
    prev_epoch_mean = None

    def step(idx: np.ndarray) -> LossTerms:
        xb, yb = source.X[idx], source.y[idx]
        terms = _theta_step(state, cfg, xb, yb, idx)
        if not cfg.freeze_weights:
            terms = _omega_step(state, cfg, xb, yb, idx)
        if not np.isfinite(float(terms.total.data)):
            raise DivergenceError(
                f"non-finite loss at iteration {iteration} "
                f"(lr_theta={cfg.lr_theta}, lr_omega={cfg.lr_omega})"
            )
        return terms

    try:
        for _ in range(cfg.epochs):
            order = state.rng.permutation(n)
            batches = [order[start:start + cfg.batch_size] for start in range(0, n, cfg.batch_size)]
            epoch_totals = []
            if cfg.alternate_per == "batch":
                for idx in batches:
                    iteration += 1
                    terms = _guarded(step, idx, iteration, cfg)
                    history.append(iteration, terms)
                    epoch_totals.append(float(terms.total.data))
                    if iteration >= cfg.max_iterations:
                        raise _StopTraining
            else:
                # one alternating iteration per epoch: a full parameter pass
                # with weights fixed, then a full weight pass with the model fixed
                iteration += 1
                for idx in batches:
                    terms = _guarded(lambda i: _theta_step(state, cfg, source.X[i], source.y[i], i),
                                     idx, iteration, cfg)
                totals = []
                for idx in batches:
                    if cfg.freeze_weights:
                        break
                    terms = _guarded(lambda i: _omega_step(state, cfg, source.X[i], source.y[i], i),
                                     idx, iteration, cfg)
                    totals.append(terms)
                terms = totals[-1] if totals else terms
                history.append(iteration, terms)
                epoch_totals.append(float(terms.total.data))
                if iteration >= cfg.max_iterations:
                    raise _StopTraining
            epoch_mean = float(np.mean(epoch_totals))
            if prev_epoch_mean is not None and abs(epoch_mean - prev_epoch_mean) < cfg.convergence_tol:
                break
            prev_epoch_mean = epoch_mean
    except _StopTraining:
        pass
    return state, history


def _guarded(fn, idx, iteration, cfg) -> LossTerms:
    try:
        return fn(idx)
    except T.EvaluationError as exc:
        raise DivergenceError(
            f"non-finite loss at iteration {iteration} "
            f"(lr_theta={cfg.lr_theta}, lr_omega={cfg.lr_omega})"
        ) from exc


def _theta_step(state: ModelState, cfg: TrainConfig, xb, yb, idx) -> LossTerms:
    omega_b = Tensor(state.omega[idx], requires_grad=False)
    state.params.set_requires_grad(True)
    terms = total_loss(state.params, omega_b, xb, yb, cfg.objective, cfg.binarize, rng=state.rng)
    if cfg.lr_theta > 0.0:
        T.backward(terms.total)
        for t in state.params.tensors():
            t.data = t.data - cfg.lr_theta * t.grad
    else:
        T.reset_graph()
    return terms


def _omega_step(state: ModelState, cfg: TrainConfig, xb, yb, idx) -> LossTerms:
    omega_b = Tensor(state.omega[idx], requires_grad=True)
    state.params.set_requires_grad(False)
    try:
        terms = total_loss(state.params, omega_b, xb, yb, cfg.objective, cfg.binarize, rng=state.rng)
        if cfg.lr_omega > 0.0:
            grads = T.backward(terms.total)
            state.omega[idx] = state.omega[idx] - cfg.lr_omega * grads[omega_b]
        else:
            T.reset_graph()
    finally:
        state.params.set_requires_grad(True)
    return terms


def predict(state: ModelState, x: np.ndarray) -> np.ndarray:
    """Class labels by logit argmax; ties resolve to the lowest index."""
    x = np.asarray(x, float)
    if x.ndim != 2 or x.shape[1] != state.input_width:
        raise T.ShapeError(
            f"predict: input shape {x.shape} does not match training width {state.input_width}"
        )
    logits = classify(state.params, extract_features(state.params, Tensor(x)))
    out = np.argmax(logits.data, axis=1)
    T.reset_graph()
    return out
