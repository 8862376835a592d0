"""Validation set, accuracy metrics, KKT-violation statistics, and timing.

The validation set holds 1000 instances: 500 per generator profile
(profile 1: p_bar/p_plus/q_bar/q_plus = 0.3/0.2/0.3/0.15, profile 2:
0.5/0.35/0.5/0.2), each with random (a_p, a_q, p_max) drawn from the
training distributions under a fixed seed, paired with exact oracle
projections.

MAE and R^2 are pooled over all 2N scalar components (R^2 centered on the
pooled truth mean); per-component values are also reported for
transparency.  Timing runs are pinned to one BLAS thread for stability.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ContractViolationError, UndefinedMetricError
from .linalg import Rng
from .network import NetworkParams, forward
from .oracle import batch_project
from .problem import InstanceBatch, build_instance_batch

GENERATOR_PROFILES = (
    (0.3, 0.2, 0.3, 0.15),
    (0.5, 0.35, 0.5, 0.2),
)
SAMPLES_PER_PROFILE = 500
DEFAULT_VALIDATION_SEED = 1234


@dataclass(frozen=True)
class ValidationSet:
    seed: int
    theta: np.ndarray          # (1000, 7)
    instances: InstanceBatch
    x_star: np.ndarray         # (1000, 2) oracle optima
    lambda_star: np.ndarray    # (1000, 7) oracle multipliers


@dataclass
class EvalReport:
    mae: float
    r2: float
    mae_per_component: tuple[float, float]
    r2_per_component: tuple[float, float]
    feasibility_violation_max: float
    feasibility_violation_mean: float
    complementarity_residual_mean: float
    stationarity_residual_mean: float
    validation_seed: int
    n_samples: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def build_validation_set(seed: int = DEFAULT_VALIDATION_SEED) -> ValidationSet:
    """Deterministic 1000-sample validation set with precomputed oracle solutions."""
    rng = Rng(seed)
    blocks = []
    for p_bar, p_plus, q_bar, q_plus in GENERATOR_PROFILES:
        n = SAMPLES_PER_PROFILE
        a_p = rng.uniform_array(0.0, 1.0, n)
        a_q = rng.uniform_array(-1.0, 1.0, n)
        p_max = rng.uniform_array(0.0, p_bar, n)
        block = np.empty((n, 7))
        block[:, 0] = a_p
        block[:, 1] = a_q
        block[:, 2] = p_bar
        block[:, 3] = p_plus
        block[:, 4] = q_bar
        block[:, 5] = q_plus
        block[:, 6] = p_max
        blocks.append(block)
    theta = np.concatenate(blocks, axis=0)
    instances = build_instance_batch(theta)
    solutions = batch_project(instances)
    x_star = np.array([s.x_star for s in solutions])
    lambda_star = np.array([s.lambda_star for s in solutions])
    return ValidationSet(
        seed=seed, theta=theta, instances=instances,
        x_star=x_star, lambda_star=lambda_star,
    )


def metrics(predictions, truths) -> tuple[float, float]:
    """Pooled (MAE, R^2) over all scalar components of the predictions."""
    pred = np.asarray(predictions, dtype=np.float64)
    true = np.asarray(truths, dtype=np.float64)
    if pred.shape != true.shape:
        raise ContractViolationError(f"shape mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ContractViolationError("metrics need at least one sample")
    diff = (pred - true).ravel()
    mae = float(np.mean(np.abs(diff)))
    flat_true = true.ravel()
    ss_tot = float(np.sum((flat_true - flat_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 undefined: truth values have zero variance")
    r2 = 1.0 - float(np.sum(diff**2)) / ss_tot
    return mae, r2


def metrics_per_component(predictions, truths):
    """(MAE, R^2) for each output column separately."""
    pred = np.asarray(predictions, dtype=np.float64)
    true = np.asarray(truths, dtype=np.float64)
    return tuple(
        metrics(pred[:, j], true[:, j]) for j in range(pred.shape[1])
    )


def kkt_violation_stats(instances: InstanceBatch, x, lam) -> dict[str, float]:
    """Per-sample KKT residual norms aggregated over a set of predictions."""
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    slack = np.einsum("bmc,bc->bm", instances.g, x) - instances.h
    feas = np.linalg.norm(np.maximum(slack, 0.0), axis=1)
    comp = np.linalg.norm(lam * slack, axis=1)
    stat_res = (x - instances.a) + np.einsum("bmc,bm->bc", instances.g, lam)
    stat = np.linalg.norm(stat_res, axis=1)
    return {
        "feasibility_violation_max": float(feas.max()),
        "feasibility_violation_mean": float(feas.mean()),
        "complementarity_residual_mean": float(comp.mean()),
        "stationarity_residual_mean": float(stat.mean()),
    }


def kkt_violation_report(params: NetworkParams, vset: ValidationSet) -> dict[str, float]:
    """KKT residual statistics of the network's predictions on a validation set."""
    x_hat, lambda_hat, _ = forward(params, vset.theta)
    return kkt_violation_stats(
        vset.instances, x_hat.astype(np.float64), lambda_hat.astype(np.float64)
    )


def evaluate(params: NetworkParams, vset: ValidationSet) -> EvalReport:
    """Full accuracy + KKT report for a model on a validation set."""
    x_hat, lambda_hat, _ = forward(params, vset.theta)
    x64 = x_hat.astype(np.float64)
    mae, r2 = metrics(x64, vset.x_star)
    per = metrics_per_component(x64, vset.x_star)
    stats = kkt_violation_stats(vset.instances, x64, lambda_hat.astype(np.float64))
    return EvalReport(
        mae=mae, r2=r2,
        mae_per_component=(per[0][0], per[1][0]),
        r2_per_component=(per[0][1], per[1][1]),
        validation_seed=vset.seed,
        n_samples=len(vset.instances),
        **stats,
    )


@dataclass(frozen=True)
class BenchRow:
    batch_size: int
    predict_ms: float
    oracle_ms: float
    ratio: float


def bench(
    params: NetworkParams,
    batch_sizes: list[int],
    repeats: int = 10,
    warmup: int = 3,
    seed: int = 0,
) -> list[BenchRow]:
    """Median wall-clock of one batched forward vs. the exact oracle.

    Pinned to one BLAS thread so medians are stable across runs.
    """
    from .trainer import sample_batch  # deferred: trainer imports this module

    if any(b < 1 for b in batch_sizes):
        raise ContractViolationError("batch sizes must be >= 1")
    rows = []
    with threadpool_limits(limits=1):
        for size in batch_sizes:
            theta = sample_batch(Rng(seed), size)
            insts = build_instance_batch(theta)

            def timed(fn):
                for _ in range(warmup):
                    fn()
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    fn()
                    samples.append((time.perf_counter() - t0) * 1e3)
                return statistics.median(samples)

            predict_ms = timed(lambda: forward(params, theta))
            oracle_ms = timed(lambda: batch_project(insts))
            rows.append(
                BenchRow(
                    batch_size=size, predict_ms=predict_ms, oracle_ms=oracle_ms,
                    ratio=oracle_ms / predict_ms,
                )
            )
    return rows


def write_bench_csv(rows: list[BenchRow], path: str | Path):
    lines = ["batch_size,predict_ms,oracle_ms,ratio"]
    for r in rows:
        lines.append(f"{r.batch_size},{r.predict_ms!r},{r.oracle_ms!r},{r.ratio!r}")
    Path(path).write_text("\n".join(lines) + "\n")
