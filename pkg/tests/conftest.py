"""Shared test helpers: random instances, feasible-point sampling, grid oracle."""

from __future__ import annotations

import numpy as np

from kinn.oracle import polygon_vertices
from kinn.problem import build_instance_batch
from kinn.trainer import sample_batch
from kinn.linalg import Rng


def random_instance_batch(seed: int, count: int):
    """Valid random instances drawn from the training distributions."""
    theta = sample_batch(Rng(seed), count)
    return theta, build_instance_batch(theta)


def feasible_points(inst, count: int, np_rng: np.random.Generator) -> np.ndarray:
    """Random points inside the polygon: convex combinations of its vertices."""
    verts = polygon_vertices(inst)
    weights = np_rng.dirichlet(np.ones(len(verts)), size=count)
    return weights @ verts


def brute_force_project(inst, resolution: float = 1e-8) -> np.ndarray:
    """Independent projection oracle by grid refinement along the boundary.

    The minimizer is either the target itself (if feasible) or lies on the
    boundary, i.e. on one of the seven constraint lines clipped against the
    other constraints.  The distance along each clipped segment is convex in
    the line parameter, so its sampled argmin is within one grid step of the
    true argmin and window refinement cannot lose it.  No use of the
    active-set enumerator or any multiplier logic.
    """
    g, h, a = inst.g, inst.h, inst.a
    m = g.shape[0]
    best = None

    def consider(x):
        nonlocal best
        if np.max(g @ x - h) > 1e-9:
            return
        d = float(np.linalg.norm(x - a))
        if best is None or d < best[0]:
            best = (d, np.array(x, dtype=float))

    consider(a)
    for i in range(m):
        sq = float(g[i] @ g[i])
        p0 = g[i] * (h[i] / sq)
        direction = np.array([-g[i, 1], g[i, 0]])
        t_lo, t_hi = -1e3, 1e3
        empty = False
        for j in range(m):
            if j == i:
                continue
            gd = float(g[j] @ direction)
            rhs = float(h[j] - g[j] @ p0)
            if abs(gd) < 1e-14:
                if rhs < -1e-9:
                    empty = True
                    break
            elif gd > 0:
                t_hi = min(t_hi, rhs / gd)
            else:
                t_lo = max(t_lo, rhs / gd)
        if empty or t_lo > t_hi + 1e-12:
            continue
        lo, hi = t_lo, t_hi
        while True:
            ts = np.linspace(lo, hi, 4001)
            pts = p0[None, :] + ts[:, None] * direction[None, :]
            k = int(np.argmin(np.linalg.norm(pts - a, axis=1)))
            spacing = (hi - lo) / 4000
            if spacing <= resolution:
                consider(pts[k])
                break
            lo = max(t_lo, ts[k] - 2 * spacing)
            hi = min(t_hi, ts[k] + 2 * spacing)
    if best is None:
        raise AssertionError("brute-force oracle found no feasible candidate")
    return best[1]
