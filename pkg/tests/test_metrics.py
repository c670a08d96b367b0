import json

import numpy as np
import pytest

from causalshift import tensor as T
from causalshift.metrics import (
    LossComponents,
    MetricsReport,
    UndefinedCorrelationError,
    accuracy,
    causal_precision,
    evaluate,
    input_gradient_importance,
    spearman,
)
from causalshift.model import ModelConfig
from causalshift.scm import Dataset
from causalshift.train import TrainConfig, init_state


@pytest.fixture(autouse=True)
def _fresh_graph():
    T.reset_graph()
    yield
    T.reset_graph()


def test_accuracy_cases():
    assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
    assert accuracy([1, 0], [0, 1]) == 0.0
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])


def test_accuracy_self_identity():
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = rng.integers(0, 3, size=20)
        assert accuracy(p, p) == 1.0


def _linear_state(weight_matrix, input_width):
    cfg = TrainConfig(model=ModelConfig(hidden_widths=(), repr_width=input_width, num_classes=2))
    state = init_state(cfg, input_width=input_width, n_samples=4)
    w, b = state.params.extractor[0]
    w.data = np.eye(input_width)
    b.data = np.zeros_like(b.data)
    cw, cb = state.params.classifier
    cw.data = np.asarray(weight_matrix, float)
    cb.data = np.zeros_like(cb.data)
    return state


def test_importance_of_linear_model():
    # logit_1 = 3 x0 - 1 x1: importance of the true-class logit per input
    state = _linear_state(np.array([[0.0, 3.0], [0.0, -1.0]]), input_width=2)
    ds = Dataset(X=np.random.default_rng(1).normal(size=(50, 2)),
                 y=np.ones(50, dtype=int), domain="source")
    imp = input_gradient_importance(state, ds)
    assert imp == pytest.approx([3.0, 1.0], abs=1e-12)


def test_importance_zero_weights():
    state = _linear_state(np.zeros((2, 2)), input_width=2)
    ds = Dataset(X=np.ones((5, 2)), y=np.zeros(5, dtype=int), domain="source")
    assert np.array_equal(input_gradient_importance(state, ds), [0.0, 0.0])


def test_importance_disconnected_feature_is_zero():
    cfg = TrainConfig(model=ModelConfig(hidden_widths=(4,), repr_width=3, num_classes=2))
    state = init_state(cfg, input_width=3, n_samples=4)
    w0 = state.params.extractor[0][0]
    w0.data[2, :] = 0.0  # sever input feature 2 from the network
    ds = Dataset(X=np.random.default_rng(2).normal(size=(20, 3)),
                 y=np.random.default_rng(3).integers(0, 2, size=20), domain="source")
    imp = input_gradient_importance(state, ds)
    assert imp[2] == 0.0
    assert np.all(imp[:2] > 0)


def test_importance_matches_finite_difference_probe():
    cfg = TrainConfig(model=ModelConfig(hidden_widths=(6,), repr_width=4, num_classes=2))
    state = init_state(cfg, input_width=3, n_samples=4)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 2, size=6)
    ds = Dataset(X=x, y=y, domain="source")
    imp = input_gradient_importance(state, ds)

    from causalshift.model import classify, extract_features
    from causalshift.tensor import Tensor

    def logit_of(xrow, label):
        def f(row):
            T.reset_graph()
            logits = classify(state.params, extract_features(state.params, Tensor(row[None, :])))
            return float(logits.data[0, label])
        return f

    fd = np.zeros_like(x)
    for i in range(len(x)):
        fd[i] = T.finite_diff(logit_of(x[i], int(y[i])), x[i], h=1e-5)
    expected = np.abs(fd).mean(axis=0)
    denom = np.maximum(np.maximum(np.abs(expected), np.abs(imp)), 1.0)
    assert np.max(np.abs(imp - expected) / denom) <= 1e-4


def test_spearman_values():
    assert spearman([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == pytest.approx(1.0)
    assert spearman([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)
    # ranks a=(1,2,3), b=(3,1,2): rho = 1 - 6*6/(3*8) = -0.5
    assert spearman([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == pytest.approx(-0.5)


def test_spearman_monotone_transform_invariance():
    rng = np.random.default_rng(7)
    a = rng.normal(size=12)
    b = rng.normal(size=12)
    base = spearman(a, b)
    assert spearman(np.exp(a), b) == pytest.approx(base, abs=1e-12)
    assert spearman(a, 3.0 * b + 7.0) == pytest.approx(base, abs=1e-12)


def test_spearman_constant_vector_rejected():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_causal_precision_cases():
    mask = np.array([1, 1, 1, 0, 0, 0])
    assert causal_precision([9, 8, 7, 1, 1, 1], mask) == 1.0
    assert causal_precision([1, 1, 1, 9, 8, 7], mask) == 0.0
    # top-3 of [9,1,8,7,1,1] is indices {0,2,3}: two causal
    assert causal_precision([9, 1, 8, 7, 1, 1], mask) == pytest.approx(2 / 3)


def test_causal_precision_scaling_invariance():
    rng = np.random.default_rng(11)
    mask = np.array([1, 0, 1, 0, 1, 0])
    imp = rng.uniform(0.1, 5.0, size=6)
    assert causal_precision(imp, mask) == causal_precision(4.2 * imp, mask)


def test_causal_precision_rejects_empty_mask():
    with pytest.raises(ValueError, match="at least one"):
        causal_precision([1.0, 2.0], np.array([0, 0]))


def test_evaluate_fills_domain_slot_and_mask_metrics():
    cfg = TrainConfig(model=ModelConfig(hidden_widths=(4,), repr_width=3, num_classes=2))
    state = init_state(cfg, input_width=4, n_samples=4)
    rng = np.random.default_rng(13)
    ds = Dataset(X=rng.normal(size=(30, 4)), y=rng.integers(0, 2, size=30),
                 domain="target", causal_mask=np.array([1, 1, 0, 0]))
    report = evaluate(state, ds, LossComponents(wce=0.5, g=0.1, pen2=0.0, pen3=0.0))
    assert report.source_accuracy is None
    assert 0.0 <= report.target_accuracy <= 1.0
    assert report.causal_precision is not None
    assert -1.0 <= report.spearman_vs_mask <= 1.0

    maskless = Dataset(X=ds.X, y=ds.y, domain="source", causal_mask=None)
    report = evaluate(state, maskless)
    assert report.target_accuracy is None
    assert report.spearman_vs_mask is None and report.causal_precision is None


def test_report_json_field_names():
    report = MetricsReport(
        source_accuracy=0.9, target_accuracy=None,
        final_loss_components=LossComponents(wce=0.1, g=0.2, pen2=0.0, pen3=0.0),
        importance=[1.0, 2.0], spearman_vs_mask=0.5, causal_precision=1.0, seed=7,
    )
    payload = json.loads(report.to_json(config_echo={"train.seed": "7"}))
    assert set(payload) == {
        "source_accuracy", "target_accuracy", "final_loss_components",
        "importance", "spearman_vs_mask", "causal_precision", "seed", "config",
    }
    assert payload["target_accuracy"] is None
    assert payload["final_loss_components"] == {"wce": 0.1, "g": 0.2, "pen2": 0.0, "pen3": 0.0}
    assert payload["config"] == {"train.seed": "7"}
