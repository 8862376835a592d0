"""Parametric convex problem contract and the generator setpoint case study.

The concrete problem projects a requested active/reactive power setpoint
``a = (a_P, a_Q)`` onto the generator capability polygon

    0 <= P,  P <= p_bar,  P <= p_max_t,
    -q_bar <= Q <= q_bar,
    Q <= tau1 * P + rho1,       (upper-right corner cut)
    Q >= tau2 * P + rho2,       (lower-right corner cut)

encoded as ``G x <= h`` with seven rows in exactly that order.  The two
oblique slopes/intercepts follow from the corner point ``(p_plus, q_plus)``
and the extreme values ``(p_bar, q_bar)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DegenerateGeometryError
from .linalg import Mat64, Vec64

# Column order of a parameter row theta (fixed; the network and all CSV
# interfaces rely on it).
THETA_COLUMNS = ("a_p", "a_q", "p_bar", "p_plus", "q_bar", "q_plus", "p_max")
THETA_DIM = len(THETA_COLUMNS)
N_CONSTRAINTS = 7
N_VARS = 2


@dataclass(frozen=True)
class GeneratorParams:
    """Physical parameters of one generator instance (all per-unit)."""

    a_p: float
    a_q: float
    p_bar: float
    p_plus: float
    q_bar: float
    q_plus: float
    p_max: float

    def __post_init__(self):
        if not all(np.isfinite(self.to_row())):
            raise ContractViolationError("generator parameters must be finite")
        if self.p_bar < 0:
            raise ContractViolationError(f"p_bar must be >= 0, got {self.p_bar}")
        if self.q_bar < 0:
            raise ContractViolationError(f"q_bar must be >= 0, got {self.q_bar}")
        if not 0 < self.p_plus <= self.p_bar:
            raise ContractViolationError(
                f"p_plus must be in (0, p_bar], got p_plus={self.p_plus}, p_bar={self.p_bar}"
            )
        if not 0 < self.q_plus <= self.q_bar:
            raise ContractViolationError(
                f"q_plus must be in (0, q_bar], got q_plus={self.q_plus}, q_bar={self.q_bar}"
            )
        if not 0 <= self.p_max <= self.p_bar:
            raise ContractViolationError(
                f"p_max must be in [0, p_bar], got p_max={self.p_max}, p_bar={self.p_bar}"
            )

    def to_row(self) -> Vec64:
        return np.array(
            [self.a_p, self.a_q, self.p_bar, self.p_plus,
             self.q_bar, self.q_plus, self.p_max],
            dtype=np.float64,
        )

    @staticmethod
    def from_row(row) -> "GeneratorParams":
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (THETA_DIM,):
            raise ContractViolationError(f"parameter row must have shape (7,), got {row.shape}")
        return GeneratorParams(*(float(v) for v in row))


def validate_param_batch(theta) -> np.ndarray:
    """Validate a (B, 7) parameter batch row by row; returns the float64 array."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] != THETA_DIM:
        raise ContractViolationError(f"parameter batch must have shape (B, 7), got {theta.shape}")
    for i, row in enumerate(theta):
        try:
            GeneratorParams.from_row(row)
        except ContractViolationError as exc:
            raise ContractViolationError(f"row {i}: {exc}") from exc
    return theta


@dataclass(frozen=True)
class ProblemInstance:
    """Materialized constraint data ``G x <= h`` plus the target point ``a``."""

    g: Mat64          # (7, 2)
    h: Vec64          # (7,)
    a: Vec64          # (2,)
    tau1: float
    rho1: float
    tau2: float
    rho2: float


@dataclass(frozen=True)
class InstanceBatch:
    """Stacked constraint data for B instances (vectorized loss/eval path)."""

    g: np.ndarray     # (B, 7, 2) float64
    h: np.ndarray     # (B, 7) float64
    a: np.ndarray     # (B, 2) float64

    def __len__(self) -> int:
        return self.g.shape[0]

    def row(self, i: int) -> ProblemInstance:
        # tau/rho recoverable from the G rows; stored implicitly.
        return ProblemInstance(
            g=self.g[i], h=self.h[i], a=self.a[i],
            tau1=float(-self.g[i, 5, 0]), rho1=float(self.h[i, 5]),
            tau2=float(self.g[i, 6, 0]), rho2=float(-self.h[i, 6]),
        )


def tau_rho(params: GeneratorParams) -> tuple[float, float, float, float]:
    """Slopes and intercepts of the two oblique capability edges.

    Requires ``p_bar > p_plus`` strictly; equality makes the slope undefined.
    """
    den = params.p_bar - params.p_plus
    if den <= 0:
        raise DegenerateGeometryError(
            f"p_bar == p_plus ({params.p_bar}) leaves the corner slopes undefined"
        )
    tau1 = (params.q_plus - params.q_bar) / den
    rho1 = params.q_bar - tau1 * params.p_plus
    tau2 = (params.q_bar - params.q_plus) / den
    rho2 = -params.q_bar - tau2 * params.p_plus
    return tau1, rho1, tau2, rho2


def build_instance(params: GeneratorParams) -> ProblemInstance:
    """Assemble G, h, a for one parameter vector (fixed row order)."""
    tau1, rho1, tau2, rho2 = tau_rho(params)
    g = np.array(
        [
            [-1.0, 0.0],      # -P <= 0
            [1.0, 0.0],       # P <= p_bar
            [1.0, 0.0],       # P <= p_max
            [0.0, -1.0],      # -Q <= q_bar
            [0.0, 1.0],       # Q <= q_bar
            [-tau1, 1.0],     # Q - tau1*P <= rho1
            [tau2, -1.0],     # tau2*P - Q <= -rho2
        ],
        dtype=np.float64,
    )
    h = np.array(
        [0.0, params.p_bar, params.p_max, params.q_bar, params.q_bar, rho1, -rho2],
        dtype=np.float64,
    )
    a = np.array([params.a_p, params.a_q], dtype=np.float64)
    return ProblemInstance(g=g, h=h, a=a, tau1=tau1, rho1=rho1, tau2=tau2, rho2=rho2)


def build_instance_batch(theta) -> InstanceBatch:
    """Vectorized :func:`build_instance` over a (B, 7) parameter batch."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] != THETA_DIM:
        raise ContractViolationError(f"parameter batch must have shape (B, 7), got {theta.shape}")
    a_p, a_q, p_bar, p_plus, q_bar, q_plus, p_max = theta.T
    den = p_bar - p_plus
    if np.any(den <= 0):
        bad = int(np.argmax(den <= 0))
        raise DegenerateGeometryError(f"row {bad}: p_bar == p_plus leaves the corner slopes undefined")
    tau1 = (q_plus - q_bar) / den
    rho1 = q_bar - tau1 * p_plus
    tau2 = (q_bar - q_plus) / den
    rho2 = -q_bar - tau2 * p_plus

    b = theta.shape[0]
    g = np.zeros((b, N_CONSTRAINTS, N_VARS), dtype=np.float64)
    g[:, 0, 0] = -1.0
    g[:, 1, 0] = 1.0
    g[:, 2, 0] = 1.0
    g[:, 3, 1] = -1.0
    g[:, 4, 1] = 1.0
    g[:, 5, 0] = -tau1
    g[:, 5, 1] = 1.0
    g[:, 6, 0] = tau2
    g[:, 6, 1] = -1.0
    h = np.stack([np.zeros(b), p_bar, p_max, q_bar, q_bar, rho1, -rho2], axis=1)
    a = np.stack([a_p, a_q], axis=1)
    return InstanceBatch(g=g, h=h, a=a)


def eval_constraints(inst: ProblemInstance, x) -> Vec64:
    """Constraint values ``G x - h`` (negative entries are satisfied with slack)."""
    x = np.asarray(x, dtype=np.float64)
    return inst.g @ x - inst.h


class ProblemContract(ABC):
    """Abstract parametric convex problem: cost, inequalities, affine equalities.

    Dimensions: ``n`` primal variables, ``m`` inequality constraints, ``p``
    equality constraints (``p == 0`` means ``equality_matrix`` returns a
    (0, n) matrix).  Gradient evaluators must agree with central finite
    differences of the value evaluators.
    """

    n: int
    m: int
    p: int

    @abstractmethod
    def objective(self, x, theta) -> float: ...

    @abstractmethod
    def objective_grad(self, x, theta) -> Vec64: ...

    @abstractmethod
    def inequality(self, x, theta) -> Vec64:
        """Values g_i(x, theta), shape (m,)."""

    @abstractmethod
    def inequality_jac(self, x, theta) -> Mat64:
        """Rows grad g_i(x, theta), shape (m, n)."""

    @abstractmethod
    def equality_matrix(self, theta) -> Mat64:
        """A(theta), shape (p, n)."""

    @abstractmethod
    def equality_rhs(self, theta) -> Vec64:
        """b(theta), shape (p,)."""


class SetpointProjection(ProblemContract):
    """The case study as a :class:`ProblemContract` (n=2, m=7, p=0).

    Cost is half the squared distance to the requested setpoint, so the
    stationarity condition reads ``(x - a) + G^T lambda = 0``.
    """

    n = N_VARS
    m = N_CONSTRAINTS
    p = 0

    def instance(self, theta) -> ProblemInstance:
        return build_instance(GeneratorParams.from_row(theta))

    def objective(self, x, theta) -> float:
        inst = self.instance(theta)
        d = np.asarray(x, dtype=np.float64) - inst.a
        return 0.5 * float(d @ d)

    def objective_grad(self, x, theta) -> Vec64:
        inst = self.instance(theta)
        return np.asarray(x, dtype=np.float64) - inst.a

    def inequality(self, x, theta) -> Vec64:
        return eval_constraints(self.instance(theta), x)

    def inequality_jac(self, x, theta) -> Mat64:
        return self.instance(theta).g

    def equality_matrix(self, theta) -> Mat64:
        return np.zeros((0, self.n), dtype=np.float64)

    def equality_rhs(self, theta) -> Vec64:
        return np.zeros(0, dtype=np.float64)
