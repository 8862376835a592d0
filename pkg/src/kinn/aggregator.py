"""Combine per-term gradient rows into one conflict-free update direction.

The main aggregator projects each gradient onto the dual cone of all
gradients, ``{v : <v, g_j> >= 0 for all j}``, and averages the projections.
By Moreau decomposition the projection of ``g_i`` is ``g_i + sum_j w_j g_j``
where ``w`` solves the small nonnegative quadratic program

    min_{w >= 0}  0.5 w^T G w + (G e_i)^T w,      G = Gram matrix,

so the whole computation needs only the L x L Gram matrix and one weighted
sum of the rows.  The resulting direction cannot conflict with any single
term to first order.  A plain mean is kept as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ContractViolationError, DivergenceError, SolverFailureError

GRAM_SYM_TOL = 1e-10
MAX_NNLS_DIM = 8
_RIDGE = 1e-12


@dataclass(frozen=True)
class LossJacobian:
    """L gradient rows of length P plus their Gram matrix.

    Rows are upcast to float64 once at construction so the Gram products and
    the final weighted combination both accumulate in 64-bit regardless of
    the 32-bit gradients coming out of the network.
    """

    rows: np.ndarray   # (L, P) float64
    gram: np.ndarray   # (L, L) float64

    @staticmethod
    def from_rows(rows) -> "LossJacobian":
        rows = np.atleast_2d(np.asarray(rows)).astype(np.float64, copy=False)
        gram = rows @ rows.T
        asym = np.max(np.abs(gram - gram.T)) if gram.size else 0.0
        if asym > GRAM_SYM_TOL:
            raise ContractViolationError(f"Gram matrix asymmetry {asym:g} exceeds tolerance")
        gram = 0.5 * (gram + gram.T)
        return LossJacobian(rows=rows, gram=gram)


def nnls_solve(gram: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Minimize ``0.5 w^T G w + c^T w`` over ``w >= 0`` for PSD G, L <= 8.

    Exhaustive active-set enumeration over all 2^L support sets: solve the
    support-restricted linear system (ridge 1e-12 if singular), keep
    candidates with w >= -1e-12 on the support and KKT residual
    ``G w + c >= -1e-10`` off it, and return the accepted candidate with the
    smallest objective (ties: smallest norm).
    """
    gram = np.asarray(gram, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    if gram.shape != (n, n):
        raise ContractViolationError(f"Gram shape {gram.shape} does not match c shape {c.shape}")
    if n > MAX_NNLS_DIM:
        raise ContractViolationError(f"active-set enumeration limited to L <= {MAX_NNLS_DIM}")
    if np.max(np.abs(gram - gram.T), initial=0.0) > GRAM_SYM_TOL:
        raise ContractViolationError("Gram matrix is not symmetric")

    best = None
    for size in range(n + 1):
        for support in combinations(range(n), size):
            w = np.zeros(n)
            if support:
                idx = list(support)
                sub = gram[np.ix_(idx, idx)]
                rhs = -c[idx]
                try:
                    sol = np.linalg.solve(sub, rhs)
                except np.linalg.LinAlgError:
                    sol = np.linalg.solve(sub + _RIDGE * np.eye(size), rhs)
                if not np.all(np.isfinite(sol)):
                    sol = np.linalg.solve(sub + _RIDGE * np.eye(size), rhs)
                if np.min(sol) < -1e-12:
                    continue
                w[idx] = sol
            resid = gram @ w + c
            off = np.setdiff1d(np.arange(n), support)
            if off.size and np.min(resid[off]) < -1e-10:
                continue
            obj = 0.5 * w @ gram @ w + c @ w
            nrm = float(np.linalg.norm(w))
            if (
                best is None
                or obj < best[0] - 1e-12 * (1.0 + abs(best[0]))
                or (obj <= best[0] + 1e-12 * (1.0 + abs(best[0])) and nrm < best[1])
            ):
                best = (obj, nrm, w)
    if best is None:
        raise SolverFailureError("no support set satisfied the KKT conditions")
    return np.maximum(best[2], 0.0)


def upgrad_weights(gram: np.ndarray) -> np.ndarray:
    """Row-combination weights: omega = (1/L) sum_i (e_i + w_i)."""
    n = gram.shape[0]
    omega = np.zeros(n)
    for i in range(n):
        omega[i] += 1.0
        omega += nnls_solve(gram, gram[:, i])
    return omega / n


def aggregate_upgrad(jac: LossJacobian) -> np.ndarray:
    """Mean of the dual-cone projections of the gradient rows."""
    if not np.all(np.isfinite(jac.gram)):
        raise DivergenceError("non-finite loss Jacobian")
    omega = upgrad_weights(jac.gram)
    return omega @ jac.rows


def aggregate_mean(jac: LossJacobian) -> np.ndarray:
    """Arithmetic mean of the gradient rows (baseline aggregator)."""
    return jac.rows.mean(axis=0)
