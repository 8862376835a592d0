"""Training loop: sampling, Jacobian descent with the dual-cone aggregator,
Adam with exponential LR decay, early stopping, and checkpoint I/O.

Each step draws a fresh parameter batch from the documented distributions
(no external data), runs one forward pass, then one backward pass per loss
term to assemble the loss Jacobian.  The aggregated direction is handed to
Adam as if it were a gradient; the learning rate at step ``t`` (0-based) is
``initial_lr * lr_gamma**t``.

A step counts as progress when any loss term improves its historical best
by more than ``improvement_tolerance``; training stops after ``patience``
consecutive steps without progress, or at ``max_steps``.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregator import LossJacobian, aggregate_upgrad
from .errors import (
    ContractViolationError,
    CorruptCheckpointError,
    DivergenceError,
    UnsupportedVersionError,
)
from .evaluation import ValidationSet, build_validation_set, metrics
from .linalg import Rng
from .loss import TERMS, LossVector, batch_loss_and_seeds
from .network import Architecture, NetworkParams, backward_multi, forward, init_params
from .problem import build_instance_batch

RESAMPLE_EPS = 1e-9
CHECKPOINT_MAGIC = b"KINN"
CHECKPOINT_VERSION = 1
TRAIN_LOG_HEADER = "step,lr,loss_s,loss_i,loss_c,mae,r2,ms"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    initial_lr: float = 1e-3
    lr_gamma: float = 0.99986
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    patience: int = 5000
    max_steps: int = 8000
    eval_every: int = 100
    seed: int = 0
    improvement_tolerance: float = 1e-6
    log_timing: bool = True

    def validate(self):
        if not 0 < self.lr_gamma <= 1:
            raise ContractViolationError(f"lr_gamma must be in (0, 1], got {self.lr_gamma}")
        if self.batch_size < 1:
            raise ContractViolationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ContractViolationError(f"patience must be >= 1, got {self.patience}")
        if self.max_steps < 1:
            raise ContractViolationError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.eval_every < 1:
            raise ContractViolationError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    _scratch: np.ndarray | None = None

    @staticmethod
    def zeros(param_count: int) -> "AdamState":
        return AdamState(
            m=np.zeros(param_count, dtype=np.float32),
            v=np.zeros(param_count, dtype=np.float32),
        )


@dataclass(frozen=True)
class TrainLogRecord:
    step: int
    lr: float
    loss_s: float
    loss_i: float
    loss_c: float
    mae: float | None = None
    r2: float | None = None
    ms: float | None = None


@dataclass
class TrainResult:
    params: NetworkParams
    best_params: NetworkParams
    records: list[TrainLogRecord]
    stop_reason: str
    steps: int
    final_loss: LossVector
    final_mae: float
    final_r2: float
    best_mae: float


def sample_batch(rng: Rng, count: int) -> np.ndarray:
    """Draw a (count, 7) parameter batch from the training distributions.

    Column order: a_p ~ U(0,1), a_q ~ U(-1,1), p_bar ~ U(0.2,0.8),
    p_plus ~ U(0, p_bar), q_bar ~ U(0.2,0.8), q_plus ~ U(0, q_bar),
    p_max ~ U(0, p_bar), with the conditional bounds taken from the same
    row.  Rows that land within 1e-9 of a degenerate geometry are redrawn.
    """
    if count < 1:
        raise ContractViolationError(f"batch size must be >= 1, got {count}")

    def draw(n):
        a_p = rng.uniform_array(0.0, 1.0, n)
        a_q = rng.uniform_array(-1.0, 1.0, n)
        p_bar = rng.uniform_array(0.2, 0.8, n)
        p_plus = rng.uniform_array(np.zeros(n), p_bar, n)
        q_bar = rng.uniform_array(0.2, 0.8, n)
        q_plus = rng.uniform_array(np.zeros(n), q_bar, n)
        p_max = rng.uniform_array(np.zeros(n), p_bar, n)
        return np.stack([a_p, a_q, p_bar, p_plus, q_bar, q_plus, p_max], axis=1)

    theta = draw(count)
    while True:
        bad = (
            (theta[:, 3] < RESAMPLE_EPS)
            | (theta[:, 2] - theta[:, 3] < RESAMPLE_EPS)
            | (theta[:, 5] < RESAMPLE_EPS)
        )
        if not bad.any():
            return theta
        theta[bad] = draw(int(bad.sum()))


def adam_update(
    params: NetworkParams, state: AdamState, direction: np.ndarray, lr: float, cfg: TrainConfig
):
    """One bias-corrected Adam step in place, treating ``direction`` as the gradient."""
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    if state._scratch is None or state._scratch.shape != state.m.shape:
        state._scratch = np.empty_like(state.m)
    buf = state._scratch
    np.multiply(direction, np.float32(1.0 - b1), out=buf)
    state.m *= b1
    state.m += buf
    np.multiply(direction, direction, out=buf)
    buf *= np.float32(1.0 - b2)
    state.v *= b2
    state.v += buf
    # step = lr * m_hat / (sqrt(v_hat) + eps), with hats bias-corrected
    np.divide(state.v, np.float32(1.0 - b2**state.t), out=buf)
    np.sqrt(buf, out=buf)
    buf += np.float32(cfg.adam_epsilon)
    np.divide(state.m, buf, out=buf)
    buf *= np.float32(lr / (1.0 - b1**state.t))
    params.flat -= buf


def train_step(
    params: NetworkParams, adam: AdamState, cfg: TrainConfig, rng: Rng
) -> LossVector:
    """Sample, forward, per-term backward, aggregate, Adam update (in place).

    The returned loss is evaluated before the parameter update.
    """
    theta = sample_batch(rng, cfg.batch_size)
    insts = build_instance_batch(theta)
    x_hat, lambda_hat, tape = forward(params, theta)
    loss_vec, seeds = batch_loss_and_seeds(insts, x_hat, lambda_hat)
    if not np.all(np.isfinite(loss_vec.as_array())):
        raise DivergenceError("non-finite loss")

    d_x = np.stack([seeds[t][0] for t in TERMS]).astype(np.float32)
    d_lam = np.stack([seeds[t][1] for t in TERMS]).astype(np.float32)
    rows = backward_multi(params, tape, d_x, d_lam)
    direction = aggregate_upgrad(LossJacobian.from_rows(rows)).astype(np.float32)
    if not np.all(np.isfinite(direction)):
        raise DivergenceError("non-finite update direction")

    lr = cfg.initial_lr * cfg.lr_gamma**adam.t
    adam_update(params, adam, direction, lr, cfg)
    return loss_vec


def run_training(
    cfg: TrainConfig,
    arch: Architecture | None = None,
    validation: ValidationSet | None = None,
    checkpoint_path: str | Path | None = None,
    best_checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Full training run; optionally writes checkpoints and the CSV log.

    On divergence the best checkpoint seen so far is still written before the
    error propagates.
    """
    cfg.validate()
    arch = arch or Architecture()
    init_rng, batch_rng = Rng.streams(cfg.seed, 2)
    params = init_params(init_rng, arch)
    adam = AdamState.zeros(arch.param_count)
    if validation is None:
        validation = build_validation_set()

    best_terms = np.full(len(TERMS), np.inf)
    stagnant = 0
    best_mae = np.inf
    best_params = params.copy()
    records: list[TrainLogRecord] = []
    stop_reason = "max_steps"

    def evaluate():
        x_hat, _, _ = forward(params, validation.theta)
        return metrics(x_hat.astype(np.float64), validation.x_star)

    try:
        for t in range(cfg.max_steps):
            t0 = time.perf_counter()
            lr = cfg.initial_lr * cfg.lr_gamma**t
            try:
                loss_vec = train_step(params, adam, cfg, batch_rng)
            except DivergenceError as exc:
                raise DivergenceError(str(exc), step=t) from exc

            terms = np.array([loss_vec.l_s, loss_vec.l_i, loss_vec.l_c])
            seen = np.isfinite(best_terms)
            progress = bool(np.any(seen & (terms < best_terms - cfg.improvement_tolerance)))
            best_terms = np.minimum(best_terms, terms)
            stagnant = 0 if progress else stagnant + 1

            mae = r2 = None
            if (t + 1) % cfg.eval_every == 0:
                mae, r2 = evaluate()
                if mae < best_mae:
                    best_mae = mae
                    best_params = params.copy()

            ms = (time.perf_counter() - t0) * 1e3 if cfg.log_timing else None
            records.append(
                TrainLogRecord(
                    step=t, lr=lr,
                    loss_s=loss_vec.l_s, loss_i=loss_vec.l_i, loss_c=loss_vec.l_c,
                    mae=mae, r2=r2, ms=ms,
                )
            )
            if stagnant >= cfg.patience:
                stop_reason = "early_stopping"
                break
    except DivergenceError:
        if best_checkpoint_path is not None and np.isfinite(best_mae):
            save_checkpoint(best_params, best_checkpoint_path)
        if log_path is not None:
            write_train_log(records, log_path)
        raise

    final_mae, final_r2 = evaluate()
    if final_mae < best_mae:
        best_mae = final_mae
        best_params = params.copy()

    if checkpoint_path is not None:
        save_checkpoint(params, checkpoint_path)
    if best_checkpoint_path is not None:
        save_checkpoint(best_params, best_checkpoint_path)
    if log_path is not None:
        write_train_log(records, log_path)

    return TrainResult(
        params=params,
        best_params=best_params,
        records=records,
        stop_reason=stop_reason,
        steps=len(records),
        final_loss=LossVector(records[-1].loss_s, records[-1].loss_i, records[-1].loss_c),
        final_mae=final_mae,
        final_r2=final_r2,
        best_mae=float(best_mae),
    )


def write_train_log(records: list[TrainLogRecord], path: str | Path):
    """CSV log; mae/r2 are empty on non-eval steps, ms empty with timing off."""

    def cell(v):
        return "" if v is None else repr(v)

    lines = [TRAIN_LOG_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [str(r.step), repr(r.lr), repr(r.loss_s), repr(r.loss_i), repr(r.loss_c),
                 cell(r.mae), cell(r.r2), cell(r.ms)]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def save_checkpoint(params: NetworkParams, path: str | Path):
    """Binary checkpoint: magic, version, architecture, float32 tensors, checksum."""
    arch = params.arch
    desc = struct.pack(
        "<5I", arch.input_dim, arch.hidden_width, arch.hidden_blocks,
        arch.primal_dim, arch.dual_dim,
    )
    payload = desc + params.flat.astype("<f4", copy=False).tobytes()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    Path(path).write_bytes(
        CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION) + payload + digest
    )


def load_checkpoint(path: str | Path) -> NetworkParams:
    """Read a checkpoint, validating magic, version, length, and checksum."""
    blob = Path(path).read_bytes()
    header = len(CHECKPOINT_MAGIC) + 4
    if len(blob) < header + 20 + 8:
        raise CorruptCheckpointError(f"{path}: truncated checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )
    payload, digest = blob[header:-8], blob[-8:]
    if hashlib.blake2b(payload, digest_size=8).digest() != digest:
        raise CorruptCheckpointError(f"{path}: checksum mismatch")
    k, width, blocks, n, m = struct.unpack_from("<5I", payload, 0)
    arch = Architecture(
        input_dim=k, hidden_width=width, hidden_blocks=blocks, primal_dim=n, dual_dim=m
    )
    data = payload[20:]
    expected = arch.param_count * 4
    if len(data) != expected:
        raise CorruptCheckpointError(
            f"{path}: payload holds {len(data)} bytes, architecture needs {expected}"
        )
    flat = np.frombuffer(data, dtype="<f4").astype(np.float32)
    return NetworkParams(arch, flat)
