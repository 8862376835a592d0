"""Vector-valued KKT-violation loss and its adjoint seeds.

Per instance, with residual ``r = (x - a) + G^T lam`` and slack
``s = G x - h``:

    stationarity    L_S = ||r||_2
    feasibility     L_I = ||max(0, s)||_2
    complementarity L_C = ||lam * s||_2

The batch loss is the arithmetic mean of each term.  Subgradient
conventions: a norm at 0 has seed 0, and d/ds max(0, s) at s == 0 is 0, so
satisfied constraints generate no update.

Loss values and seeds are computed in float64 regardless of the network's
float32 outputs; the seeds are exact analytic gradients of each term with
respect to the network outputs (x_hat, lambda_hat).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .problem import InstanceBatch, ProblemContract, ProblemInstance

TERMS = ("S", "I", "C")


@dataclass(frozen=True)
class LossVector:
    """Batch-averaged loss terms; ``l_e`` present only with equality constraints."""

    l_s: float
    l_i: float
    l_c: float
    l_e: float | None = None

    def as_array(self) -> np.ndarray:
        vals = [self.l_s, self.l_i, self.l_c]
        if self.l_e is not None:
            vals.insert(2, self.l_e)
        return np.array(vals, dtype=np.float64)

    def total(self) -> float:
        return float(self.as_array().sum())


def _check_lambda(lam: np.ndarray):
    if lam.size and np.min(lam) < 0:
        raise ContractViolationError("lambda_hat must be elementwise nonnegative")


def loss_terms(
    inst: ProblemInstance, x_hat, lambda_hat
) -> tuple[float, float, float]:
    """Per-instance (L_S, L_I, L_C) for one prediction."""
    x = np.asarray(x_hat, dtype=np.float64)
    lam = np.asarray(lambda_hat, dtype=np.float64)
    _check_lambda(lam)
    r = (x - inst.a) + inst.g.T @ lam
    s = inst.g @ x - inst.h
    l_s = float(np.linalg.norm(r))
    l_i = float(np.linalg.norm(np.maximum(s, 0.0)))
    l_c = float(np.linalg.norm(lam * s))
    return l_s, l_i, l_c


def batch_loss(insts: InstanceBatch, x_hat, lambda_hat) -> LossVector:
    """Mean of per-instance terms over the batch."""
    per = _batch_terms(insts, x_hat, lambda_hat)
    return LossVector(*(float(np.mean(col)) for col in per))


def _batch_terms(insts: InstanceBatch, x_hat, lambda_hat):
    x = np.asarray(x_hat, dtype=np.float64)
    lam = np.asarray(lambda_hat, dtype=np.float64)
    b = len(insts)
    if b == 0:
        raise ContractViolationError("batch size must be >= 1")
    if x.shape != (b, 2) or lam.shape != (b, 7):
        raise ContractViolationError(
            f"prediction shapes {x.shape}/{lam.shape} do not match batch size {b}"
        )
    _check_lambda(lam)
    r = (x - insts.a) + np.einsum("bmc,bm->bc", insts.g, lam)
    s = np.einsum("bmc,bc->bm", insts.g, x) - insts.h
    l_s = np.linalg.norm(r, axis=1)
    l_i = np.linalg.norm(np.maximum(s, 0.0), axis=1)
    l_c = np.linalg.norm(lam * s, axis=1)
    return l_s, l_i, l_c


def _safe_unit(v: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # v / ||v|| rowwise with the zero-norm rows mapped to 0 (subgradient choice).
    out = np.zeros_like(v)
    nz = norms > 0
    out[nz] = v[nz] / norms[nz][:, None]
    return out


def batch_loss_seeds(insts: InstanceBatch, x_hat, lambda_hat, term: str):
    """Gradients of the batch-mean term w.r.t. (x_hat, lambda_hat).

    Returns ``(d_x, d_lam)`` of shapes (B, 2) and (B, 7); both already carry
    the 1/B factor of the batch mean.
    """
    x = np.asarray(x_hat, dtype=np.float64)
    lam = np.asarray(lambda_hat, dtype=np.float64)
    b = len(insts)
    if b == 0:
        raise ContractViolationError("batch size must be >= 1")
    _check_lambda(lam)
    g = insts.g

    if term == "S":
        r = (x - insts.a) + np.einsum("bmc,bm->bc", g, lam)
        rn = _safe_unit(r, np.linalg.norm(r, axis=1))
        d_x = rn
        d_lam = np.einsum("bmc,bc->bm", g, rn)
    elif term == "I":
        s = np.einsum("bmc,bc->bm", g, x) - insts.h
        v = np.maximum(s, 0.0)
        vn = _safe_unit(v, np.linalg.norm(v, axis=1))
        d_x = np.einsum("bmc,bm->bc", g, vn)
        d_lam = np.zeros_like(lam)
    elif term == "C":
        s = np.einsum("bmc,bc->bm", g, x) - insts.h
        u = lam * s
        un = _safe_unit(u, np.linalg.norm(u, axis=1))
        d_x = np.einsum("bmc,bm->bc", g, lam * un)
        d_lam = s * un
    else:
        raise ContractViolationError(f"unknown loss term {term!r}; expected one of {TERMS}")
    return d_x / b, d_lam / b


def batch_loss_and_seeds(insts: InstanceBatch, x_hat, lambda_hat):
    """Loss vector plus all three per-term seed pairs, sharing intermediates.

    Equivalent to :func:`batch_loss` followed by one :func:`batch_loss_seeds`
    per term; used by the training step where the shared slack/residual
    tensors are worth computing once.
    """
    x = np.asarray(x_hat, dtype=np.float64)
    lam = np.asarray(lambda_hat, dtype=np.float64)
    b = len(insts)
    if b == 0:
        raise ContractViolationError("batch size must be >= 1")
    _check_lambda(lam)
    g = insts.g

    r = (x - insts.a) + np.einsum("bmc,bm->bc", g, lam)
    s = np.einsum("bmc,bc->bm", g, x) - insts.h
    v = np.maximum(s, 0.0)
    u = lam * s
    n_r = np.linalg.norm(r, axis=1)
    n_v = np.linalg.norm(v, axis=1)
    n_u = np.linalg.norm(u, axis=1)
    vec = LossVector(float(n_r.mean()), float(n_v.mean()), float(n_u.mean()))

    rn = _safe_unit(r, n_r)
    vn = _safe_unit(v, n_v)
    un = _safe_unit(u, n_u)
    seeds = {
        "S": (rn / b, np.einsum("bmc,bc->bm", g, rn) / b),
        "I": (np.einsum("bmc,bm->bc", g, vn) / b, np.zeros_like(lam)),
        "C": (np.einsum("bmc,bm->bc", g, lam * un) / b, (s * un) / b),
    }
    return vec, seeds


def loss_seeds(inst: ProblemInstance, x_hat, lambda_hat, term: str):
    """Per-instance analytic seeds (d_x_hat, d_lambda_hat) for one term."""
    batch = InstanceBatch(
        g=inst.g[None], h=inst.h[None], a=inst.a[None]
    )
    d_x, d_lam = batch_loss_seeds(
        batch,
        np.asarray(x_hat, dtype=np.float64)[None],
        np.asarray(lambda_hat, dtype=np.float64)[None],
        term,
    )
    return d_x[0], d_lam[0]


def kkt_loss_terms(
    contract: ProblemContract, theta, x, lam, nu=None
) -> tuple[float, float, float, float]:
    """Generic-path (L_S, L_I, L_E, L_C) through a :class:`ProblemContract`.

    ``nu`` is required when the contract has equality constraints (p > 0).
    """
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    _check_lambda(lam)
    grad = contract.objective_grad(x, theta)
    gvals = contract.inequality(x, theta)
    jac = contract.inequality_jac(x, theta)
    a_mat = contract.equality_matrix(theta)
    r = grad + jac.T @ lam
    if contract.p > 0:
        if nu is None:
            raise ContractViolationError("nu required when the contract has equality constraints")
        nu = np.asarray(nu, dtype=np.float64)
        r = r + a_mat.T @ nu
        l_e = float(np.linalg.norm(a_mat @ x - contract.equality_rhs(theta)))
    else:
        l_e = 0.0
    l_s = float(np.linalg.norm(r))
    l_i = float(np.linalg.norm(np.maximum(gvals, 0.0)))
    l_c = float(np.linalg.norm(lam * gvals))
    return l_s, l_i, l_e, l_c


def equality_seed(contract: ProblemContract, theta, x) -> np.ndarray:
    """Gradient of L_E = ||A x - b|| w.r.t. x (zero when the residual is zero)."""
    x = np.asarray(x, dtype=np.float64)
    a_mat = contract.equality_matrix(theta)
    res = a_mat @ x - contract.equality_rhs(theta)
    norm = float(np.linalg.norm(res))
    if norm == 0.0:
        return np.zeros_like(x)
    return a_mat.T @ (res / norm)
