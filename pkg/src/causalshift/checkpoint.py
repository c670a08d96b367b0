"""Plain-text checkpoints: config echo, seed, and every parameter tensor.

Layout, one section per line group:

    causalshift-checkpoint v1
    [config]
    key = value            (resolved run configuration, sorted by key)
    [meta]
    seed = 42
    input_width = 6
    [tensor extractor.0.weight]
    shape = 6,64
    data = v v v ...       (row-major, 17 significant digits)
    ...
    [end]

Values use 17 significant digits so a load rebuilds the exact float64
state and a rewrite is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams
from .tensor import Tensor

HEADER = "causalshift-checkpoint v1"


class CheckpointError(ValueError):
    """A checkpoint file is malformed; the message names the offending field."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_checkpoint(state, path, config_echo: dict[str, str]) -> None:
    lines = [HEADER, "[config]"]
    for key in sorted(config_echo):
        lines.append(f"{key} = {config_echo[key]}")
    lines += ["[meta]", f"seed = {state.seed}", f"input_width = {state.input_width}"]
    tensors = list(state.params.named_tensors()) + [("omega", Tensor(state.omega))]
    for name, t in tensors:
        lines.append(f"[tensor {name}]")
        lines.append("shape = " + ",".join(str(d) for d in t.data.shape))
        lines.append("data = " + " ".join(_fmt(v) for v in t.data.ravel()))
    lines.append("[end]")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Rebuild (params, omega, seed, input_width, config_echo) from a file."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != HEADER:
        raise CheckpointError(f"header: expected {HEADER!r}")

    config: dict[str, str] = {}
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    section = None
    for line in raw[1:]:
        if not line or line == "[end]":
            continue
        if line.startswith("[tensor "):
            section = ("tensor", line[len("[tensor "):-1])
            tensors[section[1]] = {}
            continue
        if line in ("[config]", "[meta]"):
            section = (line[1:-1], None)
            continue
        if section is None or " = " not in line:
            raise CheckpointError(f"unparseable line: {line!r}")
        key, value = line.split(" = ", 1)
        if section[0] == "config":
            config[key] = value
        elif section[0] == "meta":
            meta[key] = value
        else:
            tensors[section[1]][key] = value

    for field in ("seed", "input_width"):
        if field not in meta:
            raise CheckpointError(f"meta.{field}: missing")
        try:
            meta[field] = int(meta[field])
        except ValueError:
            raise CheckpointError(f"meta.{field}: not an integer ({meta[field]!r})") from None

    arrays: dict[str, np.ndarray] = {}
    for name, fields in tensors.items():
        for required in ("shape", "data"):
            if required not in fields:
                raise CheckpointError(f"tensor {name}: missing {required}")
        try:
            shape = tuple(int(tok) for tok in fields["shape"].split(","))
            values = np.array([float(tok) for tok in fields["data"].split()])
        except ValueError:
            raise CheckpointError(f"tensor {name}: unparseable shape or data") from None
        expected = int(np.prod(shape))
        if values.size != expected:
            raise CheckpointError(f"tensor {name}: expected {expected} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"tensor {name}: non-finite values")
        arrays[name] = values.reshape(shape)

    if "omega" not in arrays:
        raise CheckpointError("tensor omega: missing")
    omega = arrays.pop("omega")

    layers = sorted({int(name.split(".")[1]) for name in arrays if name.startswith("extractor.")})
    extractor = []
    for i in layers:
        for part in ("weight", "bias"):
            if f"extractor.{i}.{part}" not in arrays:
                raise CheckpointError(f"tensor extractor.{i}.{part}: missing")
        extractor.append((
            Tensor(arrays[f"extractor.{i}.weight"], requires_grad=True),
            Tensor(arrays[f"extractor.{i}.bias"], requires_grad=True),
        ))
    if not extractor:
        raise CheckpointError("tensor extractor.0.weight: missing")
    for part in ("classifier.weight", "classifier.bias"):
        if part not in arrays:
            raise CheckpointError(f"tensor {part}: missing")
    params = ModelParams(
        extractor=extractor,
        classifier=(Tensor(arrays["classifier.weight"], requires_grad=True),
                    Tensor(arrays["classifier.bias"], requires_grad=True)),
    )
    return params, omega, meta["seed"], meta["input_width"], config
