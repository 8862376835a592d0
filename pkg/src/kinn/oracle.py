"""Exact Euclidean projection onto the capability polygon.

Enumerates every candidate active set of the 2-D QP

    min 0.5 * ||a - x||^2   s.t.  G x <= h

namely the empty set, each single constraint, and each independent pair
(1 + 7 + 21 = 29 candidates).  Each candidate yields a primal point and
multipliers from the stationarity equation ``(x - a) + G^T lambda = 0``;
candidates that are primal-feasible with nonnegative multipliers are exact
KKT points, and the closest one is the optimum.  Exhaustive and branch-free:
correctness over speed, and the runtime is the honest baseline against which
network inference is benchmarked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleInstanceError
from .problem import InstanceBatch, ProblemInstance

FEAS_TOL = 1e-9        # Gx - h <= FEAS_TOL counts as feasible
DUAL_TOL = 1e-12       # lambda >= -DUAL_TOL counts as dual-feasible
PARALLEL_TOL = 1e-12   # |det| below this: skip the pair (captured by singles)
TIE_TOL = 1e-12        # distance ties broken by active-set size, then index


@dataclass(frozen=True)
class OracleSolution:
    x_star: np.ndarray            # (2,)
    lambda_star: np.ndarray       # (7,) >= 0
    active_set: tuple[int, ...]   # 0-based indices of tight constraints
    distance: float               # ||a - x_star||


def _candidates(inst: ProblemInstance):
    g, h, a = inst.g, inst.h, inst.a
    m = g.shape[0]
    yield a, np.zeros(m), ()

    sq = np.einsum("ij,ij->i", g, g)
    for i in range(m):
        # Projection onto the line g_i . x = h_i; lam from 1-D stationarity.
        lam = (g[i] @ a - h[i]) / sq[i]
        x = a - lam * g[i]
        lams = np.zeros(m)
        lams[i] = lam
        yield x, lams, (i,)

    for i in range(m - 1):
        for j in range(i + 1, m):
            mat = np.array([g[i], g[j]])
            det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
            if abs(det) < PARALLEL_TOL:
                continue
            x = np.linalg.solve(mat, h[[i, j]])
            # Stationarity restricted to the pair: [g_i g_j] columns.
            lam_pair = np.linalg.solve(mat.T, a - x)
            lams = np.zeros(m)
            lams[i], lams[j] = lam_pair
            yield x, lams, (i, j)


def project(inst: ProblemInstance) -> OracleSolution:
    """Exact projection of ``inst.a`` onto ``{x : Gx <= h}`` with multipliers."""
    best = None
    for x, lams, active in _candidates(inst):
        if np.max(inst.g @ x - inst.h) > FEAS_TOL:
            continue
        if active and np.min(lams[list(active)]) < -DUAL_TOL:
            continue
        dist = float(np.linalg.norm(inst.a - x))
        key = (len(active), active)
        if (
            best is None
            or dist < best[0] - TIE_TOL
            or (dist <= best[0] + TIE_TOL and key < best[1])
        ):
            best = (dist, key, x, np.maximum(lams, 0.0), active)
    if best is None:
        raise InfeasibleInstanceError("constraint polygon is empty")
    dist, _, x, lams, active = best
    return OracleSolution(x_star=x, lambda_star=lams, active_set=active, distance=dist)


def batch_project(insts: InstanceBatch) -> list[OracleSolution]:
    """Elementwise :func:`project` over a batch, preserving order."""
    out = []
    for i in range(len(insts)):
        try:
            out.append(project(insts.row(i)))
        except InfeasibleInstanceError as exc:
            raise InfeasibleInstanceError(f"instance {i}: {exc}") from exc
    return out


def polygon_vertices(inst: ProblemInstance) -> np.ndarray:
    """Feasible pairwise-intersection points (the polygon's vertex set).

    Every vertex of a bounded 2-D polytope is the intersection of two
    constraint lines, so this is exhaustive.  Duplicates (three lines through
    one point) are merged.
    """
    g, h = inst.g, inst.h
    m = g.shape[0]
    verts = []
    for i in range(m - 1):
        for j in range(i + 1, m):
            mat = np.array([g[i], g[j]])
            det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
            if abs(det) < PARALLEL_TOL:
                continue
            x = np.linalg.solve(mat, h[[i, j]])
            if np.max(g @ x - h) <= FEAS_TOL:
                verts.append(x)
    if not verts:
        raise InfeasibleInstanceError("constraint polygon has no feasible vertex")
    verts = np.array(verts)
    # Merge numerically identical vertices.
    keep = []
    for v in verts:
        if not any(np.linalg.norm(v - w) < 1e-9 for w in keep):
            keep.append(v)
    return np.array(keep)
