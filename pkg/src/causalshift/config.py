"""Run configuration: defaults <- config file <- --set overrides.

Config files are flat "key = value" lines with "#" comments and dotted
keys. Unknown keys are rejected rather than ignored, and the fully
resolved configuration is echoed into every emitted artifact. Matrices
are written as semicolon-separated rows of comma-separated numbers;
integer lists as comma-separated numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .binarize import BinarizeMode
from .model import ModelConfig
from .objective import ObjectiveConfig
from .scm import SCMConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_int(raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}") from None


def _parse_float(raw: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None


def _parse_int_list(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(_parse_int(tok) for tok in raw.split(","))


def _parse_vector(raw: str) -> np.ndarray:
    return np.array([_parse_float(tok) for tok in raw.strip().split(",")])


def _parse_matrix(raw: str) -> np.ndarray:
    rows = [_parse_vector(row) for row in raw.strip().split(";")]
    widths = {row.size for row in rows}
    if len(widths) != 1:
        raise ConfigError(f"matrix rows have unequal lengths: {raw!r}")
    return np.vstack(rows)


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip()
        if value not in options:
            raise ConfigError(f"expected one of {options}, got {raw!r}")
        return value

    return parse


def _echo_float(v: float) -> str:
    return repr(float(v))


def _echo_vector(v) -> str:
    return ",".join(_echo_float(x) for x in np.asarray(v).ravel())


def _echo_matrix(v) -> str:
    return ";".join(_echo_vector(row) for row in np.asarray(v))


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    default: object
    echo: Callable[[object], str] = str


def _registry() -> dict[str, _Key]:
    scm = SCMConfig()
    obj = ObjectiveConfig()
    model = ModelConfig()
    trn = TrainConfig()
    echo_bool = lambda v: "true" if v else "false"
    echo_ints = lambda v: ",".join(str(int(x)) for x in v)
    return {
        "scm.n_confounders": _Key(_parse_int, scm.n_confounders),
        "scm.n_causal": _Key(_parse_int, scm.n_causal),
        "scm.n_spurious": _Key(_parse_int, scm.n_spurious),
        "scm.confounder_to_causal": _Key(_parse_matrix, scm.confounder_to_causal, _echo_matrix),
        "scm.confounder_to_spurious_source": _Key(
            _parse_matrix, scm.confounder_to_spurious_source, _echo_matrix),
        "scm.confounder_to_spurious_target": _Key(
            _parse_matrix, scm.confounder_to_spurious_target, _echo_matrix),
        "scm.confounder_to_outcome": _Key(_parse_vector, scm.confounder_to_outcome, _echo_vector),
        "scm.causal_to_outcome": _Key(_parse_vector, scm.causal_to_outcome, _echo_vector),
        "scm.noise_std": _Key(_parse_float, scm.noise_std, _echo_float),
        "scm.seed": _Key(_parse_int, scm.seed),
        "scm.n_source": _Key(_parse_int, 2000),
        "scm.n_target": _Key(_parse_int, 2000),
        "model.hidden_widths": _Key(_parse_int_list, model.hidden_widths, echo_ints),
        "model.repr_width": _Key(_parse_int, model.repr_width),
        "model.num_classes": _Key(_parse_int, model.num_classes),
        "binarize.mode": _Key(_choice(("deterministic", "stochastic")), "deterministic"),
        "binarize.ste_clip": _Key(_parse_float, 1.0, _echo_float),
        "balance.eps": _Key(_parse_float, obj.eps, _echo_float),
        "objective.lambda1": _Key(_parse_float, obj.lambda1, _echo_float),
        "objective.lambda2": _Key(_parse_float, obj.lambda2, _echo_float),
        "objective.lambda3": _Key(_parse_float, obj.lambda3, _echo_float),
        "train.epochs": _Key(_parse_int, trn.epochs),
        "train.batch_size": _Key(_parse_int, trn.batch_size),
        "train.lr_theta": _Key(_parse_float, trn.lr_theta, _echo_float),
        "train.lr_omega": _Key(_parse_float, trn.lr_omega, _echo_float),
        "train.seed": _Key(_parse_int, trn.seed),
        "train.convergence_tol": _Key(_parse_float, trn.convergence_tol, _echo_float),
        "train.max_iterations": _Key(_parse_int, trn.max_iterations),
        "train.alternate_per": _Key(_choice(("batch", "epoch")), trn.alternate_per),
        "train.freeze_weights": _Key(_parse_bool, trn.freeze_weights, echo_bool),
    }


REGISTRY = _registry()


def parse_config_file(path) -> dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line.rstrip()!r}")
            key, value = (part.strip() for part in body.split("=", 1))
            values[key] = value
    return values


class RunConfig:
    """Typed key-value settings resolved from defaults, file and overrides."""

    def __init__(self, values: dict[str, object]):
        self._values = values

    def __getitem__(self, key: str):
        return self._values[key]

    def echo(self) -> dict[str, str]:
        """Canonical string form of every resolved key, for artifact headers."""
        return {key: REGISTRY[key].echo(self._values[key]) for key in sorted(self._values)}

    def scm_config(self) -> SCMConfig:
        cfg = SCMConfig(
            n_confounders=self["scm.n_confounders"],
            n_causal=self["scm.n_causal"],
            n_spurious=self["scm.n_spurious"],
            confounder_to_causal=self["scm.confounder_to_causal"],
            confounder_to_spurious_source=self["scm.confounder_to_spurious_source"],
            confounder_to_spurious_target=self["scm.confounder_to_spurious_target"],
            confounder_to_outcome=self["scm.confounder_to_outcome"],
            causal_to_outcome=self["scm.causal_to_outcome"],
            noise_std=self["scm.noise_std"],
            seed=self["scm.seed"],
        )
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                epochs=self["train.epochs"],
                batch_size=self["train.batch_size"],
                lr_theta=self["train.lr_theta"],
                lr_omega=self["train.lr_omega"],
                seed=self["train.seed"],
                convergence_tol=self["train.convergence_tol"],
                max_iterations=self["train.max_iterations"],
                alternate_per=self["train.alternate_per"],
                freeze_weights=self["train.freeze_weights"],
                objective=ObjectiveConfig(
                    lambda1=self["objective.lambda1"],
                    lambda2=self["objective.lambda2"],
                    lambda3=self["objective.lambda3"],
                    eps=self["balance.eps"],
                ),
                model=ModelConfig(
                    hidden_widths=tuple(self["model.hidden_widths"]),
                    repr_width=self["model.repr_width"],
                    num_classes=self["model.num_classes"],
                ),
                binarize=BinarizeMode(
                    kind=self["binarize.mode"],
                    ste_clip=self["binarize.ste_clip"],
                ),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def resolve(file_values: dict[str, str] | None = None,
            overrides: list[str] | None = None) -> RunConfig:
    """Apply precedence defaults <- file <- overrides; reject unknown keys."""
    values = {key: spec.default for key, spec in REGISTRY.items()}

    def apply(key: str, raw: str, origin: str) -> None:
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r} ({origin})")
        try:
            values[key] = REGISTRY[key].parse(raw)
        except ConfigError as exc:
            raise ConfigError(f"{key} ({origin}): {exc}") from None

    for key, raw in (file_values or {}).items():
        apply(key, raw, "config file")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        apply(key.strip(), raw.strip(), "--set")
    return RunConfig(values)


def load(config_path=None, overrides: list[str] | None = None) -> RunConfig:
    file_values = parse_config_file(config_path) if config_path else None
    return resolve(file_values, overrides)
