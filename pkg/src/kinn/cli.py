"""Command-line interface: train, predict, oracle, eval, bench.

All errors exit nonzero with a single ``error: <category>: <reason>`` line on
stderr.  ``KINN_THREADS`` caps the BLAS worker threads for every subcommand.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import evaluation, oracle, trainer
from .errors import ContractViolationError, DivergenceError, KinnError
from .network import Architecture, forward
from .problem import THETA_COLUMNS, GeneratorParams, build_instance
from .trainer import TrainConfig, load_checkpoint

PREDICT_HEADER = list(THETA_COLUMNS)
PREDICT_OUT_HEADER = ["p_hat", "q_hat"] + [f"lambda_{i}" for i in range(1, 8)]
ORACLE_OUT_HEADER = PREDICT_HEADER + ["p_star", "q_star", "distance", "active_set"]

_CONFIG_KEYS = {f.name for f in fields(TrainConfig)}
_ARCH_KEYS = {"hidden_width", "hidden_blocks"}
_PATH_KEYS = {"checkpoint_out", "best_checkpoint_out", "log_out"}


class CliError(KinnError):
    def __init__(self, category: str, message: str):
        self.category = category
        super().__init__(message)


def load_run_config(path: str):
    """Parse the training config JSON; unknown keys are rejected by name."""
    p = Path(path)
    if not p.exists():
        raise CliError("config", f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CliError("config", f"{path}: top-level value must be an object")
    arch_doc = doc.pop("architecture", {})
    if not isinstance(arch_doc, dict):
        raise CliError("config", "architecture must be an object")
    for key in doc:
        if key not in _CONFIG_KEYS | _PATH_KEYS:
            raise CliError("config", f"unknown key {key!r}")
    for key in arch_doc:
        if key not in _ARCH_KEYS:
            raise CliError("config", f"unknown key {key!r} in architecture")
    cfg_kwargs = {k: v for k, v in doc.items() if k in _CONFIG_KEYS}
    paths = {k: doc.get(k) for k in _PATH_KEYS}
    try:
        cfg = TrainConfig(**cfg_kwargs)
        cfg.validate()
        arch = Architecture(**arch_doc)
    except (TypeError, ContractViolationError) as exc:
        raise CliError("config", str(exc)) from exc
    return cfg, arch, paths


def _read_theta_csv(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise CliError("input", f"input file not found: {path}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError("input", f"{path}: missing header row") from None
        if [c.strip() for c in header] != PREDICT_HEADER:
            raise CliError(
                "input",
                f"{path}: header must be {','.join(PREDICT_HEADER)}",
            )
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(PREDICT_HEADER):
                raise CliError("input", f"row {i}: expected {len(PREDICT_HEADER)} fields")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise CliError("input", f"row {i}: {exc}") from exc
            try:
                GeneratorParams.from_row(values)
            except ContractViolationError as exc:
                raise CliError("input", f"row {i}: {exc}") from exc
            rows.append(values)
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(PREDICT_HEADER))


def cmd_train(args) -> int:
    if args.config is not None:
        cfg, arch, paths = load_run_config(args.config)
    else:
        cfg, arch, paths = TrainConfig(), Architecture(), {k: None for k in _PATH_KEYS}
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    out = Path(args.out or paths["checkpoint_out"] or "kinn_model.ckpt")
    best_out = Path(paths["best_checkpoint_out"] or out.with_suffix(".best.ckpt"))
    log_out = Path(args.log or paths["log_out"] or out.with_suffix(".log.csv"))

    try:
        result = trainer.run_training(
            cfg, arch=arch,
            checkpoint_path=out, best_checkpoint_path=best_out, log_path=log_out,
        )
    except DivergenceError as exc:
        raise CliError("divergence", str(exc)) from exc
    lv = result.final_loss
    print(f"stopped after {result.steps} steps ({result.stop_reason})")
    print(f"final loss: L_S={lv.l_s:.6f} L_I={lv.l_i:.6f} L_C={lv.l_c:.6f}")
    print(f"validation: mae={result.final_mae:.6f} r2={result.final_r2:.6f} (best mae={result.best_mae:.6f})")
    print(f"checkpoint: {out}")
    print(f"best checkpoint: {best_out}")
    print(f"log: {log_out}")
    return 0


def _load_model(path: str):
    if not Path(path).exists():
        raise CliError("checkpoint", f"model file not found: {path}")
    return load_checkpoint(path)


def cmd_predict(args) -> int:
    params = _load_model(args.model)
    theta = _read_theta_csv(args.input)
    lines = [",".join(PREDICT_OUT_HEADER)]
    if len(theta):
        x_hat, lambda_hat, _ = forward(params, theta)
        for xr, lr in zip(x_hat, lambda_hat):
            lines.append(",".join(repr(float(v)) for v in (*xr, *lr)))
    Path(args.output).write_text("\n".join(lines) + "\n")
    return 0


def cmd_oracle(args) -> int:
    theta = _read_theta_csv(args.input)
    lines = [",".join(ORACLE_OUT_HEADER)]
    for i, row in enumerate(theta, start=1):
        try:
            inst = build_instance(GeneratorParams.from_row(row))
        except KinnError as exc:
            raise CliError("input", f"row {i}: {exc}") from exc
        sol = oracle.project(inst)
        active = ";".join(str(j + 1) for j in sol.active_set)
        cells = [repr(float(v)) for v in row]
        cells += [repr(float(sol.x_star[0])), repr(float(sol.x_star[1])), repr(sol.distance), active]
        lines.append(",".join(cells))
    Path(args.output).write_text("\n".join(lines) + "\n")
    return 0


def cmd_eval(args) -> int:
    params = _load_model(args.model)
    vset = evaluation.build_validation_set(args.seed)
    report = evaluation.evaluate(params, vset)
    text = report.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_bench(args) -> int:
    params = _load_model(args.model)
    try:
        sizes = [int(s) for s in args.batch_sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise CliError("args", f"bad batch size list {args.batch_sizes!r}") from exc
    if not sizes:
        raise CliError("args", "batch size list is empty")
    try:
        rows = evaluation.bench(params, sizes)
    except ContractViolationError as exc:
        raise CliError("args", str(exc)) from exc
    print("batch_size,predict_ms,oracle_ms,ratio")
    for r in rows:
        print(f"{r.batch_size},{r.predict_ms:.3f},{r.oracle_ms:.3f},{r.ratio:.2f}")
    if args.out:
        evaluation.write_bench_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinn",
        description="Neural surrogate for generator setpoint projection, trained on KKT residuals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoints + CSV log")
    p.add_argument("--config", help="JSON training config (defaults used when omitted)")
    p.add_argument("--out", help="final checkpoint path")
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="run the network on a CSV of parameter rows")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("oracle", help="exact projection for a CSV of parameter rows")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("eval", help="accuracy and KKT report on the validation set")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=evaluation.DEFAULT_VALIDATION_SEED)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="network vs oracle timing table")
    p.add_argument("--model", required=True)
    p.add_argument("--batch-sizes", default="1,10,100,1000")
    p.add_argument("--out", help="also write the CSV table here")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("KINN_THREADS")
    try:
        if threads is not None:
            with threadpool_limits(limits=int(threads)):
                return args.fn(args)
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except KinnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
