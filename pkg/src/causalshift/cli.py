"""Command-line surface: generate, train, eval, sweep, gradcheck.

Every emitted artifact (checkpoint, history CSV, metrics JSON, sweep
summary) embeds the fully resolved configuration and seed, so a run can
be reproduced from any of its outputs. Exit status is 0 only on full
success; malformed inputs and configuration problems exit 2, runtime
failures exit 1.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import scm, tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .gradcheck import run_suite
from .metrics import LossComponents, evaluate
from .model import ModelParams  # noqa: F401  (re-exported for checkpoint consumers)
from .train import DataError, DivergenceError, ModelState, train

USAGE_ERRORS = (ConfigError, scm.ConfigError, scm.FormatError, scm.ParseError,
                DataError, CheckpointError, tensor.LabelError, tensor.ShapeError)
RUNTIME_ERRORS = (DivergenceError, tensor.EvaluationError, tensor.GraphError, OSError)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    shared.add_argument("--set", dest="sets", metavar="KEY=VALUE", action="append", default=[],
                        help="override a config key (repeatable; beats the config file)")
    shared.add_argument("--out", metavar="DIR", help="directory for emitted files")

    parser = argparse.ArgumentParser(
        prog="causalshift",
        description="Balancing-weight regularized training for covariate-shift domain adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[shared],
                       help="write source.csv and target.csv from the structural causal model")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[shared],
                       help="train on a source CSV; writes checkpoint, history and metrics")
    p.add_argument("source_csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[shared],
                       help="evaluate a checkpoint on a dataset CSV; prints metrics JSON")
    p.add_argument("checkpoint")
    p.add_argument("dataset_csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[shared],
                       help="grid-sweep config values; one training run per grid point")
    p.add_argument("source_csv")
    p.add_argument("target_csv")
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                   help="parameter values to sweep (repeatable; grids combine as a product)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[shared],
                       help="compare analytic gradients against finite differences")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    return config_mod.load(args.config, args.sets)


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    scm_cfg = cfg.scm_config()
    n_source, n_target = cfg["scm.n_source"], cfg["scm.n_target"]
    source = scm.generate(scm_cfg, "source", n_source, seed=cfg["scm.seed"])
    target = scm.generate(scm_cfg, "target", n_target, seed=cfg["scm.seed"] + 1)
    scm.write_csv(source, out / "source.csv")
    scm.write_csv(target, out / "target.csv")
    print(f"wrote {out / 'source.csv'} ({n_source} samples) and {out / 'target.csv'} ({n_target} samples)")
    return 0


def _write_history(history, echo: dict[str, str], path: Path) -> None:
    lines = [f"# {key} = {value}" for key, value in echo.items()]
    lines += history.csv_lines()
    path.write_text("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    source = scm.read_csv(args.source_csv)
    train_cfg = cfg.train_config()
    state, history = train(train_cfg, source)

    echo = cfg.echo()
    save_checkpoint(state, out / "checkpoint.txt", echo)
    _write_history(history, echo, out / "history.csv")

    last = history.records[-1]
    report = evaluate(state, source,
                      LossComponents(wce=last.wce, g=last.g, pen2=last.pen2, pen3=last.pen3))
    (out / "metrics.json").write_text(report.to_json(config_echo=echo))
    print(f"trained {len(history)} iterations; wrote checkpoint.txt, history.csv, metrics.json in {out}")
    return 0


def _state_from_checkpoint(path) -> tuple[ModelState, dict[str, str]]:
    params, omega, seed, input_width, echo = load_checkpoint(path)
    cfg = config_mod.resolve(file_values=echo)
    state = ModelState(params=params, omega=omega, seed=seed,
                       input_width=input_width, config=cfg.train_config(),
                       rng=np.random.default_rng(seed))
    return state, echo


def cmd_eval(args) -> int:
    state, echo = _state_from_checkpoint(args.checkpoint)
    ds = scm.read_csv(args.dataset_csv)
    report = evaluate(state, ds)
    text = report.to_json(config_echo=echo)
    sys.stdout.write(text)
    if args.out:
        (_out_dir(args) / "eval_metrics.json").write_text(text)
    return 0


def _parse_grid(items: list[str]) -> list[tuple[str, list[str]]]:
    if not items:
        raise ConfigError("sweep needs at least one --grid KEY=V1,V2,...")
    grid = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--grid expects KEY=V1,V2,..., got {item!r}")
        key, values = item.split("=", 1)
        key = key.strip()
        if key not in config_mod.REGISTRY:
            raise ConfigError(f"unknown config key {key!r} (--grid)")
        tokens = [tok.strip() for tok in values.split(",") if tok.strip()]
        if not tokens:
            raise ConfigError(f"--grid {key}: empty value set")
        grid.append((key, tokens))
    return grid


def cmd_sweep(args) -> int:
    base_cfg = _load_config(args)
    grid = _parse_grid(args.grid)
    out = _out_dir(args)
    source = scm.read_csv(args.source_csv)
    target = scm.read_csv(args.target_csv)
    base_seed = base_cfg["train.seed"]

    param_names = [key for key, _ in grid]
    header = (["run_index", "seed"] + param_names
              + ["status", "source_accuracy", "target_accuracy", "causal_precision", "error"])
    rows = [",".join(header)]

    for run_index, combo in enumerate(itertools.product(*(values for _, values in grid))):
        seed = base_seed + run_index
        sets = list(args.sets) + [f"{k}={v}" for k, v in zip(param_names, combo)] \
            + [f"train.seed={seed}"]
        row = [str(run_index), str(seed), *combo]
        try:
            cfg = config_mod.load(args.config, sets)
            state, history = train(cfg.train_config(), source)
            last = history.records[-1]
            src_report = evaluate(state, source,
                                  LossComponents(wce=last.wce, g=last.g,
                                                 pen2=last.pen2, pen3=last.pen3))
            tgt_report = evaluate(state, target)
            report = src_report
            report.target_accuracy = tgt_report.target_accuracy
            if tgt_report.causal_precision is not None:
                report.causal_precision = tgt_report.causal_precision
                report.spearman_vs_mask = tgt_report.spearman_vs_mask
            (out / f"run_{run_index:03d}_metrics.json").write_text(
                report.to_json(config_echo=cfg.echo()))
            precision = "" if report.causal_precision is None else _fmt(report.causal_precision)
            row += ["ok", _fmt(report.source_accuracy), _fmt(report.target_accuracy), precision, ""]
        except (USAGE_ERRORS + RUNTIME_ERRORS) as exc:  # failed runs stay in the summary
            row += ["error", "", "", "", str(exc).replace(",", ";").replace("\n", " ")]
        rows.append(",".join(row))

    echo_lines = [f"# {key} = {value}" for key, value in base_cfg.echo().items()]
    (out / "summary.csv").write_text("\n".join(echo_lines + rows) + "\n")
    print(f"swept {len(rows) - 1} runs; wrote {out / 'summary.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    results = run_suite(seed=cfg["train.seed"])
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:36s} max_rel_err={r.max_rel_err:.3e} tol={r.tolerance:.0e} {status}")
    print(f"{len(results) - len(failed)}/{len(results)} gradient components passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
