import math

import numpy as np
import pytest

from causalshift import tensor as T
from causalshift.model import (
    ModelConfig,
    ModelParams,
    classify,
    extract_features,
    init_params,
    weighted_ce,
)
from causalshift.tensor import Tensor


@pytest.fixture(autouse=True)
def _fresh_graph():
    T.reset_graph()
    yield
    T.reset_graph()


def _params(hidden, repr_width, classes, input_width, seed=0):
    cfg = ModelConfig(hidden_widths=tuple(hidden), repr_width=repr_width, num_classes=classes)
    return init_params(cfg, input_width, np.random.default_rng(seed))


def test_parameter_shapes_chain():
    # widths 4 -> 6 -> 3 with 2 classes
    p = _params(hidden=[6], repr_width=3, classes=2, input_width=4)
    shapes = [t.shape for _, t in p.named_tensors()]
    assert shapes == [(4, 6), (6,), (6, 3), (3,), (3, 2), (2,)]


def test_zero_input_zero_bias_gives_zero_features():
    p = _params(hidden=[5], repr_width=3, classes=2, input_width=4)
    z = extract_features(p, Tensor(np.zeros((6, 4))))
    assert np.array_equal(z.data, np.zeros((6, 3)))


def test_identity_layer_passes_nonnegative_input():
    p = _params(hidden=[], repr_width=3, classes=2, input_width=3)
    p.extractor[0] = (Tensor(np.eye(3), requires_grad=True), Tensor(np.zeros(3), requires_grad=True))
    x = np.abs(np.random.default_rng(1).normal(size=(5, 3)))
    z = extract_features(p, Tensor(x))
    assert np.array_equal(z.data, x)


def test_feature_shape_contract():
    p = _params(hidden=[6], repr_width=3, classes=2, input_width=4)
    z = extract_features(p, Tensor(np.random.default_rng(2).normal(size=(8, 4))))
    assert z.shape == (8, 3)
    assert np.all(np.isfinite(z.data))


def test_width_mismatch_raises():
    p = _params(hidden=[6], repr_width=3, classes=2, input_width=4)
    with pytest.raises(T.ShapeError, match="width"):
        extract_features(p, Tensor(np.zeros((3, 5))))
    with pytest.raises(T.ShapeError):
        classify(p, Tensor(np.zeros((3, 4))))


def test_zero_classifier_gives_uniform_softmax():
    p = _params(hidden=[6], repr_width=3, classes=4, input_width=4)
    p.classifier = (Tensor(np.zeros((3, 4)), requires_grad=True), Tensor(np.zeros(4), requires_grad=True))
    logits = classify(p, Tensor(np.random.default_rng(3).normal(size=(5, 3))))
    assert np.array_equal(logits.data, np.zeros((5, 4)))
    probs = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
    assert np.allclose(probs, 0.25)


def test_classifier_margin_decides_argmax():
    p = _params(hidden=[], repr_width=3, classes=3, input_width=3)
    w = np.zeros((3, 3))
    w[0, 2] = 10.0
    p.classifier = (Tensor(w, requires_grad=True), Tensor(np.zeros(3), requires_grad=True))
    logits = classify(p, Tensor([[1.0, 0.0, 0.0]]))
    assert int(np.argmax(logits.data[0])) == 2


def test_classify_shape_contract():
    p = _params(hidden=[6], repr_width=3, classes=2, input_width=4)
    logits = classify(p, Tensor(np.zeros((8, 3))))
    assert logits.shape == (8, 2)


def test_weighted_ce_analytic_value():
    # one sample, two classes, logits [0,0]: -ln(1/2) = ln 2
    loss = weighted_ce(Tensor([[0.0, 0.0]]), np.array([0]), Tensor([1.0]))
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_weighted_ce_zero_weights_annihilate():
    logits = Tensor(np.random.default_rng(4).normal(size=(5, 3)))
    loss = weighted_ce(logits, np.array([0, 1, 2, 0, 1]), Tensor(np.zeros(5)))
    assert loss.item() == 0.0


def test_weighted_ce_uniform_weights_equal_plain_risk():
    rng = np.random.default_rng(5)
    logits_data = rng.normal(size=(7, 3))
    labels = rng.integers(0, 3, size=7)
    weighted = weighted_ce(Tensor(logits_data), labels, Tensor(np.ones(7))).item()
    per_sample = T.softmax_cross_entropy(Tensor(logits_data), labels)
    plain = T.scale(T.sum_all(per_sample), 1.0 / 7.0).item()
    assert weighted == plain  # bit-identical


def test_weighted_ce_label_out_of_range():
    with pytest.raises(T.LabelError, match="sample 2"):
        weighted_ce(Tensor(np.zeros((3, 2))), np.array([0, 1, 2]), Tensor(np.ones(3)))


def test_weighted_ce_gradient_is_scaled_softmax_minus_onehot():
    rng = np.random.default_rng(6)
    n, k = 6, 3
    logits_data = rng.normal(size=(n, k))
    labels = rng.integers(0, k, size=n)
    w = rng.uniform(0.5, 2.0, size=n)

    logits = Tensor(logits_data, requires_grad=True)
    grads = T.backward(weighted_ce(logits, labels, Tensor(w)))

    shifted = np.exp(logits_data - logits_data.max(axis=1, keepdims=True))
    softmax = shifted / shifted.sum(axis=1, keepdims=True)
    onehot = np.eye(k)[labels]
    expected = (softmax - onehot) * (w / n)[:, None]
    assert np.max(np.abs(grads[logits] - expected)) <= 1e-12

    def f(p):
        T.reset_graph()
        return weighted_ce(Tensor(p), labels, Tensor(w)).item()

    fd = T.finite_diff(f, logits, h=1e-5)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(grads[logits])), 1.0)
    assert np.max(np.abs(grads[logits] - fd) / denom) <= 1e-4


def test_weighted_ce_shift_invariance():
    rng = np.random.default_rng(7)
    logits_data = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 1])
    w = rng.uniform(0.2, 1.5, size=4)
    base = weighted_ce(Tensor(logits_data), labels, Tensor(w)).item()
    shifted = weighted_ce(Tensor(logits_data + 57.0), labels, Tensor(w)).item()
    assert abs(base - shifted) <= 1e-10


def test_init_is_seed_deterministic():
    a = _params(hidden=[6], repr_width=3, classes=2, input_width=4, seed=9)
    b = _params(hidden=[6], repr_width=3, classes=2, input_width=4, seed=9)
    for (_, ta), (_, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert np.array_equal(ta.data, tb.data)


def test_bias_gradient_through_replicate_rows():
    p = _params(hidden=[], repr_width=2, classes=2, input_width=2, seed=11)
    x = np.random.default_rng(12).normal(size=(5, 2))
    bias = p.extractor[0][1]

    def f(b):
        T.reset_graph()
        probe = ModelParams(
            extractor=[(Tensor(p.extractor[0][0].data), Tensor(b))],
            classifier=(Tensor(p.classifier[0].data), Tensor(p.classifier[1].data)),
        )
        return T.sum_all(T.square(extract_features(probe, Tensor(x)))).item()

    grads = T.backward(T.sum_all(T.square(extract_features(p, Tensor(x)))))
    fd = T.finite_diff(f, bias, h=1e-5)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(grads[bias])), 1.0)
    assert np.max(np.abs(grads[bias] - fd) / denom) <= 1e-4
