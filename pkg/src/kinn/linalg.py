"""Dense kernels and seeded random number generation.

Conventions used everywhere in this package:

* ``Vec64`` / ``Mat64`` are contiguous ``numpy`` arrays of ``float64`` with
  explicit 1-D / 2-D shape.  Ground-truth math (oracle, aggregator, loss
  values) stays in 64-bit; only the network runs in 32-bit.
* :class:`Rng` wraps numpy's PCG64 generator.  The same seed yields the same
  stream within one build of this package; bit-equality across numpy versions
  is not promised.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .errors import ContractViolationError

Vec64 = NDArray[np.float64]
Mat64 = NDArray[np.float64]


class Rng:
    """Seeded PRNG stream (PCG64). One stream per logical task; never shared."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @staticmethod
    def streams(seed: int, n: int) -> list["Rng"]:
        """Derive ``n`` independent child streams from one root seed."""
        children = np.random.SeedSequence(seed).spawn(n)
        out = []
        for child in children:
            rng = Rng.__new__(Rng)
            rng.seed = int(seed)
            rng._gen = np.random.Generator(np.random.PCG64(child))
            out.append(rng)
        return out

    def uniform(self, lo: float, hi: float) -> float:
        """One draw from U(lo, hi); the degenerate interval returns ``lo``."""
        if lo > hi:
            raise ContractViolationError(f"uniform bounds reversed: lo={lo} > hi={hi}")
        return float(self._gen.uniform(lo, hi))

    def uniform_array(self, lo, hi, size) -> Vec64:
        """Vectorized U(lo, hi) draws; ``lo``/``hi`` may be arrays (elementwise bounds)."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(lo > hi):
            raise ContractViolationError("uniform bounds reversed in at least one element")
        return self._gen.uniform(lo, hi, size)


def matvec(m: Mat64, v: Vec64) -> Vec64:
    """Matrix-vector product in float64."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ContractViolationError(
            f"matvec shape mismatch: {m.shape} x {v.shape}"
        )
    return m @ v


def l2_norm(v) -> float:
    """Euclidean norm; exactly 0.0 for the zero vector."""
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def uniform_sample(rng: Rng, lo: float, hi: float) -> float:
    """One U(lo, hi) draw from ``rng``."""
    return rng.uniform(lo, hi)
