import numpy as np
import pytest

from causalshift.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from causalshift.model import ModelConfig
from causalshift.train import TrainConfig, init_state


def _trained_like_state(seed=3):
    cfg = TrainConfig(seed=seed, model=ModelConfig(hidden_widths=(5,), repr_width=3, num_classes=2))
    state = init_state(cfg, input_width=4, n_samples=12)
    rng = np.random.default_rng(99)
    for t in state.params.tensors():
        t.data = t.data + rng.normal(size=t.data.shape)
    state.omega = rng.uniform(0.5, 1.5, size=12)
    return state


def test_round_trip_exact(tmp_path):
    state = _trained_like_state()
    path = tmp_path / "ckpt.txt"
    echo = {"train.seed": "3", "model.repr_width": "3"}
    save_checkpoint(state, path, echo)
    params, omega, seed, input_width, config = load_checkpoint(path)
    assert seed == 3 and input_width == 4
    assert config == echo
    assert np.array_equal(omega, state.omega)
    for (_, a), (_, b) in zip(state.params.named_tensors(), params.named_tensors()):
        assert np.array_equal(a.data, b.data)


def test_save_is_byte_deterministic(tmp_path):
    state = _trained_like_state()
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_checkpoint(state, p1, {"k": "v"})
    save_checkpoint(state, p2, {"k": "v"})
    assert p1.read_bytes() == p2.read_bytes()


def test_corruption_names_offending_field(tmp_path):
    state = _trained_like_state()
    path = tmp_path / "ckpt.txt"
    save_checkpoint(state, path, {})
    text = path.read_text()

    broken = text.replace("causalshift-checkpoint v1", "something else", 1)
    (tmp_path / "h.txt").write_text(broken)
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(tmp_path / "h.txt")

    lines = text.splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.startswith("[tensor extractor.0.weight]"))
    data_line = lines[idx + 2]
    lines[idx + 2] = data_line.rsplit(" ", 1)[0]  # drop one value
    (tmp_path / "t.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(CheckpointError, match="extractor.0.weight"):
        load_checkpoint(tmp_path / "t.txt")

    broken = text.replace("seed = 3", "seed = banana", 1)
    (tmp_path / "s.txt").write_text(broken)
    with pytest.raises(CheckpointError, match="meta.seed"):
        load_checkpoint(tmp_path / "s.txt")

    broken = "\n".join(ln for ln in text.splitlines() if not ln.startswith("[tensor omega]"))
    (tmp_path / "o.txt").write_text(broken + "\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "o.txt")
