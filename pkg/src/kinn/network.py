"""Batched MLP mapping parameter vectors to (x_hat, lambda_hat).

Topology: a linear input projection (k -> width) with LeakyReLU, then
``blocks`` residual blocks ``y = LeakyReLU(W y + b) + y`` at constant width,
then one linear head (width -> n + m) whose first ``n`` outputs are x_hat
(no activation) and last ``m`` outputs pass through ReLU to give the
nonnegative multipliers lambda_hat.

All parameters live in one flat float32 vector addressed through a layout
table, so the optimizer, checkpoints, and Jacobian rows all see plain 1-D
arrays.  The activation derivative at exactly 0 is taken from the positive
branch (i.e. 1) for both ReLU and LeakyReLU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DivergenceError
from .linalg import Rng

LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 7
    hidden_width: int = 512
    hidden_blocks: int = 3
    primal_dim: int = 2
    dual_dim: int = 7

    @property
    def head_dim(self) -> int:
        return self.primal_dim + self.dual_dim

    def layout(self) -> list[tuple[str, int, tuple[int, ...]]]:
        """(name, offset, shape) for every tensor, in storage order."""
        entries = []
        off = 0

        def add(name, shape):
            nonlocal off
            entries.append((name, off, shape))
            off += int(np.prod(shape))

        add("input.weight", (self.hidden_width, self.input_dim))
        add("input.bias", (self.hidden_width,))
        for i in range(self.hidden_blocks):
            add(f"block{i}.weight", (self.hidden_width, self.hidden_width))
            add(f"block{i}.bias", (self.hidden_width,))
        add("head.weight", (self.head_dim, self.hidden_width))
        add("head.bias", (self.head_dim,))
        return entries

    @property
    def param_count(self) -> int:
        name, off, shape = self.layout()[-1]
        return off + int(np.prod(shape))


class NetworkParams:
    """Flat float32 parameter vector plus named views defined by the layout."""

    def __init__(self, arch: Architecture, flat: np.ndarray):
        flat = np.ascontiguousarray(flat, dtype=np.float32)
        if flat.shape != (arch.param_count,):
            raise ContractViolationError(
                f"flat parameter vector must have shape ({arch.param_count},), got {flat.shape}"
            )
        self.arch = arch
        self.flat = flat
        self._views = {
            name: flat[off:off + int(np.prod(shape))].reshape(shape)
            for name, off, shape in arch.layout()
        }

    def view(self, name: str) -> np.ndarray:
        return self._views[name]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, self.flat.copy())


def init_params(rng: Rng, arch: Architecture = Architecture()) -> NetworkParams:
    """Fan-in-scaled uniform weights (gain for LeakyReLU 0.01), zero biases."""
    gain = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))
    flat = np.zeros(arch.param_count, dtype=np.float32)
    params = NetworkParams(arch, flat)
    for name, _, shape in arch.layout():
        if name.endswith(".weight"):
            fan_in = shape[1]
            bound = gain * math.sqrt(3.0 / fan_in)
            params.view(name)[...] = rng.uniform_array(-bound, bound, shape).astype(np.float32)
    return params


@dataclass
class ForwardTape:
    """Per-layer state retained for the reverse pass."""

    x: np.ndarray                  # (B, k) float32 input
    pre: list[np.ndarray]          # pre-activations: input layer then blocks
    act: list[np.ndarray]          # post-activations aligned with pre
    head_pre: np.ndarray           # (B, n+m) pre-ReLU head output
    param_count: int
    # Activation-derivative masks, filled on first backward and reused by the
    # per-loss-term backward passes over the same tape.
    masks: list[np.ndarray] | None = None
    head_mask: np.ndarray | None = None


def _leaky(z: np.ndarray) -> np.ndarray:
    # max(z, slope*z) equals LeakyReLU exactly for 0 < slope < 1.
    return np.maximum(z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, np.float32(1.0), np.float32(LEAKY_SLOPE))


def forward(params: NetworkParams, theta, dtype=np.float32):
    """Batched forward pass; returns (x_hat, lambda_hat, tape).

    ``theta`` rows follow the fixed parameter column order.  ``dtype`` exists
    for float64 re-evaluation in gradient checks; training uses float32.
    """
    arch = params.arch
    x = np.ascontiguousarray(np.asarray(theta), dtype=dtype)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ContractViolationError(
            f"input must have shape (B, {arch.input_dim}), got {x.shape}"
        )

    def w(name):
        return params.view(name).astype(dtype, copy=False)

    pre, act = [], []
    z = x @ w("input.weight").T + w("input.bias")
    pre.append(z)
    a = _leaky(z)
    act.append(a)
    for i in range(arch.hidden_blocks):
        z = a @ w(f"block{i}.weight").T + w(f"block{i}.bias")
        pre.append(z)
        a = _leaky(z) + a
        act.append(a)
    head = a @ w("head.weight").T + w("head.bias")
    if not np.all(np.isfinite(head)):
        raise DivergenceError("non-finite network activations")
    x_hat = head[:, : arch.primal_dim]
    lambda_hat = np.maximum(head[:, arch.primal_dim:], 0)
    tape = ForwardTape(x=x, pre=pre, act=act, head_pre=head, param_count=arch.param_count)
    return x_hat, lambda_hat, tape


def backward(params: NetworkParams, tape: ForwardTape, d_x_hat, d_lambda_hat) -> np.ndarray:
    """Gradient of sum(d_x_hat * x_hat + d_lambda_hat * lambda_hat) w.r.t. params.

    Returns a flat float32 vector in layout order.  The tape must come from a
    matching forward call on the same parameter vector.
    """
    d_x_hat = np.asarray(d_x_hat)
    d_lambda_hat = np.asarray(d_lambda_hat)
    return backward_multi(params, tape, d_x_hat[None], d_lambda_hat[None])[0]


def backward_multi(
    params: NetworkParams, tape: ForwardTape, d_x_hat, d_lambda_hat
) -> np.ndarray:
    """Reverse pass for L independent seed sets over one shared tape.

    ``d_x_hat`` has shape (L, B, n) and ``d_lambda_hat`` (L, B, m); the result
    is an (L, P) float32 matrix whose rows are the per-seed-set gradients.
    One batched pass costs the same GEMM volume as L separate passes but far
    less dispatch overhead, which is what the per-loss-term Jacobian assembly
    needs every training step.
    """
    arch = params.arch
    if tape.param_count != arch.param_count or tape.x.shape[1] != arch.input_dim:
        raise ContractViolationError("tape does not match the parameter layout")
    b = tape.x.shape[0]
    dtype = tape.head_pre.dtype
    d_x_hat = np.ascontiguousarray(np.asarray(d_x_hat), dtype=dtype)
    d_lambda_hat = np.ascontiguousarray(np.asarray(d_lambda_hat), dtype=dtype)
    if (
        d_x_hat.ndim != 3 or d_lambda_hat.ndim != 3
        or d_x_hat.shape[1:] != (b, arch.primal_dim)
        or d_lambda_hat.shape[1:] != (b, arch.dual_dim)
        or d_x_hat.shape[0] != d_lambda_hat.shape[0]
    ):
        raise ContractViolationError("seed shapes do not match the tape batch")
    l = d_x_hat.shape[0]

    rows = np.zeros((l, arch.param_count), dtype=np.float32)
    spans = {name: (off, int(np.prod(shape))) for name, off, shape in arch.layout()}

    def put(name, values):
        off, size = spans[name]
        rows[:, off:off + size] = values.reshape(l, -1)

    def w(name):
        return params.view(name).astype(dtype, copy=False)

    if tape.masks is None:
        # Derivative at exactly 0 is the positive-branch value (1) for both
        # activations.
        tape.masks = [_leaky_grad(z) for z in tape.pre]
        tape.head_mask = (tape.head_pre[:, arch.primal_dim:] >= 0).astype(dtype)

    d_head = np.concatenate([d_x_hat, d_lambda_hat * tape.head_mask], axis=2)
    put("head.weight", d_head.transpose(0, 2, 1) @ tape.act[-1])
    put("head.bias", d_head.sum(axis=1))
    d_a = d_head @ w("head.weight")

    for i in range(arch.hidden_blocks - 1, -1, -1):
        d_z = d_a * tape.masks[i + 1]
        put(f"block{i}.weight", d_z.transpose(0, 2, 1) @ tape.act[i])
        put(f"block{i}.bias", d_z.sum(axis=1))
        # Skip connection: upstream gradient flows around the block unchanged.
        d_a = d_z @ w(f"block{i}.weight") + d_a

    d_z = d_a * tape.masks[0]
    put("input.weight", d_z.transpose(0, 2, 1) @ tape.x)
    put("input.bias", d_z.sum(axis=1))
    return rows
