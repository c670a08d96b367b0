"""Synthetic domain-shift data from a linear structural causal model.

Confounders z drive causal features c, spurious features s, and the
outcome; c also drives the outcome directly:

    z ~ N(0, I)
    c = z M_c + noise
    s = z M_s(domain) + noise
    y = 1[ c . beta_c + z . beta_z + noise > 0 ]

Source and target share every mechanism except z -> s, so the conditional
P(y | c) is invariant across domains while the spurious correlations can
move or flip. The default configuration flips the sign of the spurious
mechanism in the target, which reverses the source's confounded
correlations there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DOMAINS = ("source", "target")


class ConfigError(ValueError):
    """Invalid generator configuration."""


class FormatError(ValueError):
    """A dataset file violates the expected layout."""


class ParseError(ValueError):
    """A dataset row failed to parse; message carries the line number."""


def _default_causal_coupling() -> np.ndarray:
    return np.array([[1.0, 0.8, 0.0], [0.0, 0.6, 1.0]])


def _default_spurious_coupling() -> np.ndarray:
    return np.array([[1.5, 0.0, 0.8], [0.0, 1.4, 0.6]])


def _default_spurious_coupling_target() -> np.ndarray:
    # the "flip" shift: the target reverses every spurious mechanism sign
    return np.array([[-1.5, 0.0, -0.8], [0.0, -1.4, -0.6]])


@dataclass
class SCMConfig:
    n_confounders: int = 2
    n_causal: int = 3
    n_spurious: int = 3
    confounder_to_causal: np.ndarray = field(default_factory=_default_causal_coupling)
    confounder_to_spurious_source: np.ndarray = field(default_factory=_default_spurious_coupling)
    confounder_to_spurious_target: np.ndarray = field(default_factory=_default_spurious_coupling_target)
    confounder_to_outcome: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8]))
    causal_to_outcome: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    noise_std: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        z, c, s = int(self.n_confounders), int(self.n_causal), int(self.n_spurious)
        if min(z, c, s) < 1:
            raise ConfigError(f"dimensions must be positive, got z={z} c={c} s={s}")
        checks = [
            ("confounder_to_causal", np.shape(self.confounder_to_causal), (z, c)),
            ("confounder_to_spurious_source", np.shape(self.confounder_to_spurious_source), (z, s)),
            ("confounder_to_spurious_target", np.shape(self.confounder_to_spurious_target), (z, s)),
            ("confounder_to_outcome", np.shape(self.confounder_to_outcome), (z,)),
            ("causal_to_outcome", np.shape(self.causal_to_outcome), (c,)),
        ]
        for name, got, want in checks:
            if got != want:
                raise ConfigError(f"{name}: shape {got} does not chain, expected {want}")
        if not self.noise_std > 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")


@dataclass
class Dataset:
    """Features (causal columns first), binary labels, domain tag, mask."""

    X: np.ndarray
    y: np.ndarray
    domain: str = "source"
    causal_mask: np.ndarray | None = None

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def width(self) -> int:
        return self.X.shape[1]


def generate(cfg: SCMConfig, domain: str, n: int, seed: int | None = None) -> Dataset:
    """Draw ``n`` samples for one domain; identical cfg+seed+domain replays exactly."""
    cfg.validate()
    if domain not in DOMAINS:
        raise ConfigError(f"domain must be one of {DOMAINS}, got {domain!r}")
    if n < 1:
        raise ConfigError(f"sample count must be at least 1, got {n}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    z = rng.standard_normal((n, int(cfg.n_confounders)))
    c = z @ np.asarray(cfg.confounder_to_causal, float) + cfg.noise_std * rng.standard_normal((n, int(cfg.n_causal)))
    spurious_coupling = (cfg.confounder_to_spurious_source if domain == "source"
                         else cfg.confounder_to_spurious_target)
    s = z @ np.asarray(spurious_coupling, float) + cfg.noise_std * rng.standard_normal((n, int(cfg.n_spurious)))
    score = (c @ np.asarray(cfg.causal_to_outcome, float)
             + z @ np.asarray(cfg.confounder_to_outcome, float)
             + cfg.noise_std * rng.standard_normal(n))
    y = (score > 0.0).astype(np.int64)
    mask = np.array([1] * int(cfg.n_causal) + [0] * int(cfg.n_spurious))
    return Dataset(X=np.column_stack([c, s]), y=y, domain=domain, causal_mask=mask)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------
#
# Layout: optional "# key=value" metadata lines (causal_mask, domain), then
# the header "x0,...,x{p-1},label", then one decimal row per sample. Floats
# are written with 17 significant digits so the round trip is exact.


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(ds: Dataset, path) -> None:
    lines = []
    if ds.causal_mask is not None:
        lines.append("# causal_mask=" + ",".join(str(int(m)) for m in ds.causal_mask))
    lines.append(f"# domain={ds.domain}")
    lines.append(",".join(f"x{j}" for j in range(ds.width)) + ",label")
    for row, label in zip(ds.X, ds.y):
        lines.append(",".join(_fmt(v) for v in row) + f",{int(label)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> Dataset:
    with open(path) as fh:
        raw = fh.read().splitlines()

    meta: dict[str, str] = {}
    line_no = 0
    for line in raw:
        if not line.startswith("#"):
            break
        line_no += 1
        body = line.lstrip("#").strip()
        if "=" not in body:
            raise FormatError(f"line {line_no}: metadata comment must be '# key=value', got {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in ("causal_mask", "domain"):
            raise FormatError(f"line {line_no}: unknown metadata key {key!r}")
        meta[key] = value

    if line_no >= len(raw):
        raise FormatError("file has no header line")
    header = raw[line_no].split(",")
    if header[-1] != "label":
        raise ParseError(f"line {line_no + 1}: header must end with a 'label' column")
    width = len(header) - 1
    if width < 1 or header[:-1] != [f"x{j}" for j in range(width)]:
        raise FormatError(f"line {line_no + 1}: feature columns must be named x0..x{max(width - 1, 0)}")

    mask = None
    if "causal_mask" in meta:
        try:
            mask = np.array([int(tok) for tok in meta["causal_mask"].split(",")])
        except ValueError:
            raise FormatError(f"causal_mask metadata is not a list of integers: {meta['causal_mask']!r}") from None
        if mask.size != width or not np.all((mask == 0) | (mask == 1)):
            raise FormatError(f"causal_mask must be {width} entries of 0/1, got {meta['causal_mask']!r}")

    domain = meta.get("domain", "source")
    if domain not in DOMAINS:
        raise FormatError(f"domain metadata must be one of {DOMAINS}, got {domain!r}")

    xs, ys = [], []
    for offset, line in enumerate(raw[line_no + 1:], start=line_no + 2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != width + 1:
            raise ParseError(f"line {offset}: expected {width + 1} fields, got {len(parts)}")
        try:
            xs.append([float(tok) for tok in parts[:-1]])
        except ValueError:
            raise ParseError(f"line {offset}: non-numeric feature value") from None
        try:
            ys.append(int(parts[-1]))
        except ValueError:
            raise ParseError(f"line {offset}: non-numeric label {parts[-1]!r}") from None

    if not xs:
        raise FormatError("file contains no data rows")
    return Dataset(X=np.array(xs, float), y=np.array(ys, np.int64), domain=domain, causal_mask=mask)
