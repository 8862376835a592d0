import numpy as np
import pytest

from kinn.aggregator import (
    LossJacobian,
    aggregate_mean,
    aggregate_upgrad,
    nnls_solve,
)
from kinn.errors import ContractViolationError, DivergenceError


def jac(rows):
    return LossJacobian.from_rows(np.asarray(rows, dtype=np.float64))


def test_mean_basics():
    assert np.allclose(aggregate_mean(jac([[1.0, 0.0], [0.0, 1.0]])), [0.5, 0.5])
    assert np.allclose(aggregate_mean(jac([[2.0, -1.0, 3.0]])), [2.0, -1.0, 3.0])
    g = np.array([1.0, 2.0, -0.5])
    assert np.allclose(aggregate_mean(jac([g, -g])), 0.0)


def test_upgrad_equals_mean_when_nonconflicting():
    rng = np.random.default_rng(5)
    found = 0
    while found < 20:
        rows = rng.normal(size=(3, 12))
        gram = rows @ rows.T
        if np.min(gram) < 0:
            continue
        j = jac(rows)
        assert np.allclose(aggregate_upgrad(j), aggregate_mean(j), atol=1e-10)
        found += 1


def test_upgrad_opposed_rows_cancel():
    d = aggregate_upgrad(jac([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.allclose(d, 0.0, atol=1e-10)


def test_upgrad_orthogonal_rows():
    j = jac([[1.0, 0.0], [0.0, 1.0]])
    d = aggregate_upgrad(j)
    assert np.allclose(d, [0.5, 0.5])
    for g in j.rows:
        assert d @ g >= 0.0


def test_upgrad_single_row_identity():
    g = np.array([0.3, -2.0, 1.5])
    assert np.allclose(aggregate_upgrad(jac([g])), g)
    assert np.allclose(aggregate_mean(jac([g])), g)


def test_upgrad_never_conflicts():
    rng = np.random.default_rng(11)
    for trial in range(1000):
        l = int(rng.integers(2, 5))
        p = int(rng.integers(2, 100))
        rows = rng.normal(size=(l, p)) * rng.uniform(0.1, 10)
        d = aggregate_upgrad(jac(rows))
        dn = np.linalg.norm(d)
        if dn < 1e-9 * np.abs(rows).max():
            # Degenerate cone: the exact direction is 0 (no update, so no
            # conflict); the computed d is cancellation noise.
            continue
        for g in rows:
            assert d @ g >= -1e-8 * dn * np.linalg.norm(g)


def test_upgrad_scale_equivariant():
    rng = np.random.default_rng(13)
    for _ in range(50):
        rows = rng.normal(size=(3, 20))
        alpha = float(rng.uniform(0.1, 10.0))
        d1 = aggregate_upgrad(jac(rows))
        d2 = aggregate_upgrad(jac(alpha * rows))
        assert np.allclose(d2, alpha * d1, rtol=1e-8, atol=1e-10)


def test_upgrad_rejects_nonfinite():
    rows = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises((DivergenceError, ContractViolationError)):
        aggregate_upgrad(LossJacobian(rows=rows, gram=rows @ rows.T))


def test_nnls_zero_when_c_nonnegative():
    g = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.allclose(nnls_solve(g, np.array([0.5, 0.1])), 0.0)
    assert np.allclose(nnls_solve(g, np.zeros(2)), 0.0)


def test_nnls_separable_case():
    w = nnls_solve(np.eye(2), np.array([-1.0, 2.0]))
    assert np.allclose(w, [1.0, 0.0])


def test_nnls_complementarity():
    rng = np.random.default_rng(17)
    for _ in range(200):
        b = rng.normal(size=(3, 3))
        gram = b @ b.T
        c = rng.normal(size=3)
        w = nnls_solve(gram, c)
        assert np.min(w) >= 0.0
        assert abs(w @ (gram @ w + c)) <= 1e-8


def test_nnls_dimension_guard():
    with pytest.raises(ContractViolationError):
        nnls_solve(np.eye(9), np.zeros(9))


def grid_minimize(gram, c, lo=0.0, hi=10.0, n=2001):
    """Brute-force minimizer of 0.5 w'Gw + c'w over a [lo,hi]^2 grid."""
    ts = np.linspace(lo, hi, n)
    w1, w2 = np.meshgrid(ts, ts, indexing="ij")
    obj = (
        0.5 * (gram[0, 0] * w1**2 + 2 * gram[0, 1] * w1 * w2 + gram[1, 1] * w2**2)
        + c[0] * w1 + c[1] * w2
    )
    k = int(np.argmin(obj))
    return np.array([w1.flat[k], w2.flat[k]])


def test_nnls_matches_grid_brute_force():
    # Well-conditioned instances (eigenvalues >= 1) keep the minimizer unique
    # and within the grid box; tolerance is two grid steps.
    rng = np.random.default_rng(19)
    step = 10.0 / 2000
    for _ in range(100):
        b = rng.uniform(-1.0, 1.0, size=(2, 2))
        gram = b.T @ b + np.eye(2)
        c = rng.uniform(-2.0, 2.0, size=2)
        w = nnls_solve(gram, c)
        w_grid = grid_minimize(gram, c)
        assert np.max(np.abs(w - w_grid)) <= 2 * step


def test_gram_matrix_symmetric_psd():
    rng = np.random.default_rng(23)
    for _ in range(50):
        rows = rng.normal(size=(4, 30)).astype(np.float32)
        j = LossJacobian.from_rows(rows)
        assert np.max(np.abs(j.gram - j.gram.T)) <= 1e-10
        assert np.min(np.linalg.eigvalsh(j.gram)) >= -1e-8
