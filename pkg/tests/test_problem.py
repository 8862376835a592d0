import numpy as np
import pytest

from conftest import random_instance_batch
from kinn.errors import ContractViolationError, DegenerateGeometryError
from kinn.problem import (
    GeneratorParams,
    SetpointProjection,
    build_instance,
    build_instance_batch,
    eval_constraints,
    tau_rho,
    validate_param_batch,
)

GEN1 = dict(a_p=0.0, a_q=0.0, p_bar=0.3, p_plus=0.2, q_bar=0.3, q_plus=0.15, p_max=0.25)


def test_tau_rho_generator_one():
    t1, r1, t2, r2 = tau_rho(GeneratorParams(**GEN1))
    assert np.allclose([t1, r1, t2, r2], [-1.5, 0.6, 1.5, -0.6])


def test_tau_rho_flat_top():
    p = GeneratorParams(a_p=0.0, a_q=0.0, p_bar=0.5, p_plus=0.3, q_bar=0.4, q_plus=0.4, p_max=0.5)
    t1, r1, _, _ = tau_rho(p)
    assert t1 == 0.0
    assert r1 == 0.4


def test_tau_rho_symmetry():
    theta, _ = random_instance_batch(seed=3, count=10_000)
    for row in theta[:200]:
        t1, r1, t2, r2 = tau_rho(GeneratorParams.from_row(row))
        assert np.isclose(t2, -t1)
        assert np.isclose(r2, -r1)
    # Vectorized check over the full 10^4 draws.
    batch = build_instance_batch(theta)
    tau1 = -batch.g[:, 5, 0]
    tau2 = batch.g[:, 6, 0]
    assert np.allclose(tau2, -tau1)
    assert np.allclose(-batch.h[:, 6], -batch.h[:, 5])


def test_tau_rho_degenerate_rejected():
    p = GeneratorParams(a_p=0.0, a_q=0.0, p_bar=0.3, p_plus=0.3, q_bar=0.3, q_plus=0.1, p_max=0.2)
    with pytest.raises(DegenerateGeometryError):
        tau_rho(p)


def test_build_instance_generator_one():
    inst = build_instance(GeneratorParams(**GEN1))
    assert np.allclose(inst.h, [0.0, 0.3, 0.25, 0.3, 0.3, 0.6, 0.6])
    assert np.allclose(inst.a, [0.0, 0.0])
    # Oblique rows carry the slopes with the signs that encode the two cuts.
    assert np.allclose(inst.g[5], [1.5, 1.0])    # (-tau1, 1)
    assert np.allclose(inst.g[6], [1.5, -1.0])   # (tau2, -1)


def test_origin_always_feasible():
    theta, batch = random_instance_batch(seed=5, count=500)
    vals = -batch.h  # G @ (0,0) - h
    assert np.all(vals <= 1e-12)


def test_polygon_inside_box():
    # Feasibility of x implies 0 <= P <= p_bar and |Q| <= q_bar.
    theta, batch = random_instance_batch(seed=8, count=200)
    rng = np.random.default_rng(0)
    from conftest import feasible_points

    for i in range(0, 200, 10):
        inst = batch.row(i)
        pts = feasible_points(inst, 200, rng)
        p_bar, q_bar = theta[i, 2], theta[i, 4]
        assert np.all(pts[:, 0] >= -1e-9)
        assert np.all(pts[:, 0] <= p_bar + 1e-9)
        assert np.all(np.abs(pts[:, 1]) <= q_bar + 1e-9)


def test_eval_constraints_values():
    inst = build_instance(GeneratorParams(**GEN1))
    # The origin sits exactly on the P >= 0 boundary; a strictly interior
    # point has every entry negative.
    assert np.all(eval_constraints(inst, [0.0, 0.0]) <= 0)
    assert np.all(eval_constraints(inst, [0.1, 0.0]) < 0)
    vals = eval_constraints(inst, [0.25, 0.0])
    assert vals[2] == 0.0
    vals = eval_constraints(inst, [inst.h[1] + 1.0, 0.0])
    assert np.isclose(vals[1], 1.0)


def test_param_validation_errors():
    with pytest.raises(ContractViolationError, match="p_plus"):
        GeneratorParams(a_p=0, a_q=0, p_bar=0.3, p_plus=0.4, q_bar=0.3, q_plus=0.1, p_max=0.2)
    with pytest.raises(ContractViolationError, match="q_plus"):
        GeneratorParams(a_p=0, a_q=0, p_bar=0.3, p_plus=0.2, q_bar=0.3, q_plus=0.0, p_max=0.2)
    with pytest.raises(ContractViolationError, match="p_max"):
        GeneratorParams(a_p=0, a_q=0, p_bar=0.3, p_plus=0.2, q_bar=0.3, q_plus=0.1, p_max=0.4)
    with pytest.raises(ContractViolationError, match="row 1"):
        validate_param_batch([[0, 0, 0.3, 0.2, 0.3, 0.15, 0.25],
                              [0, 0, 0.3, 0.2, 0.3, 0.15, 0.31]])


def test_batch_matches_single():
    theta, batch = random_instance_batch(seed=13, count=64)
    for i in (0, 17, 63):
        inst = build_instance(GeneratorParams.from_row(theta[i]))
        assert np.allclose(inst.g, batch.g[i])
        assert np.allclose(inst.h, batch.h[i])
        assert np.allclose(inst.a, batch.a[i])
        row = batch.row(i)
        assert np.allclose(row.g, inst.g)
        assert np.isclose(row.tau1, inst.tau1)
        assert np.isclose(row.rho2, inst.rho2)


def test_contract_gradients_match_finite_differences():
    contract = SetpointProjection()
    rng = np.random.default_rng(21)
    theta = np.array([0.4, -0.2, 0.5, 0.3, 0.4, 0.2, 0.45])
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, size=2)
        grad = contract.objective_grad(x, theta)
        jac = contract.inequality_jac(x, theta)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (contract.objective(x + e, theta) - contract.objective(x - e, theta)) / (2 * h)
            assert np.isclose(grad[k], fd, rtol=1e-5, atol=1e-8)
            fd_g = (contract.inequality(x + e, theta) - contract.inequality(x - e, theta)) / (2 * h)
            assert np.allclose(jac[:, k], fd_g, rtol=1e-5, atol=1e-8)


def test_cost_gradient_is_displacement():
    contract = SetpointProjection()
    theta = np.array([0.1, 0.2, 0.6, 0.3, 0.5, 0.25, 0.5])
    x = np.array([0.3, -0.1])
    assert np.allclose(contract.objective_grad(x, theta), x - np.array([0.1, 0.2]))
