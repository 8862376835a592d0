import numpy as np
import pytest

from conftest import brute_force_project, feasible_points, random_instance_batch
from kinn.errors import InfeasibleInstanceError
from kinn.loss import loss_terms
from kinn.oracle import batch_project, polygon_vertices, project
from kinn.problem import GeneratorParams, InstanceBatch, build_instance

GEN1 = dict(p_bar=0.3, p_plus=0.2, q_bar=0.3, q_plus=0.15, p_max=0.25)


def gen1_instance(a_p, a_q):
    return build_instance(GeneratorParams(a_p=a_p, a_q=a_q, **GEN1))


def test_interior_point_is_fixed():
    sol = project(gen1_instance(0.1, 0.05))
    assert np.allclose(sol.x_star, [0.1, 0.05])
    assert sol.active_set == ()
    assert np.all(sol.lambda_star == 0.0)
    assert sol.distance == 0.0


def test_single_active_constraint():
    sol = project(gen1_instance(2.0, 0.0))
    assert np.allclose(sol.x_star, [0.25, 0.0])
    assert sol.active_set == (2,)
    assert np.isclose(sol.lambda_star[2], 1.75)
    assert np.isclose(sol.distance, 1.75)


def test_vertex_solution_cross_checked_by_grid():
    # Established with the brute-force grid refinement before trusting the
    # enumerator: the optimum sits on the corner where the flat top meets
    # the upper oblique edge.
    inst = gen1_instance(2.0, 2.0)
    x_grid = brute_force_project(inst, resolution=1e-6)
    sol = project(inst)
    assert np.linalg.norm(sol.x_star - x_grid) < 5e-6
    assert np.allclose(sol.x_star, [0.2, 0.3])
    assert sol.active_set == (4, 5)
    assert np.allclose(sol.lambda_star[[4, 5]], [0.5, 1.2])


def test_matches_grid_on_random_instances():
    theta, batch = random_instance_batch(seed=31, count=25)
    for i in range(25):
        inst = batch.row(i)
        sol = project(inst)
        x_grid = brute_force_project(inst, resolution=1e-8)
        assert np.linalg.norm(sol.x_star - x_grid) < 1e-6
        assert sol.distance <= np.linalg.norm(x_grid - inst.a) + 1e-9


def test_solution_satisfies_kkt_certificate():
    theta, batch = random_instance_batch(seed=37, count=300)
    for i in range(300):
        inst = batch.row(i)
        sol = project(inst)
        assert np.max(inst.g @ sol.x_star - inst.h) <= 1e-9
        assert np.min(sol.lambda_star) >= 0.0
        station = (sol.x_star - inst.a) + inst.g.T @ sol.lambda_star
        assert np.linalg.norm(station) <= 1e-9
        inactive = [j for j in range(7) if j not in sol.active_set]
        assert np.all(sol.lambda_star[inactive] == 0.0)
        l_s, l_i, l_c = loss_terms(inst, sol.x_star, sol.lambda_star)
        assert max(l_s, l_i, l_c) <= 1e-8


def test_dominates_random_feasible_points():
    theta, batch = random_instance_batch(seed=41, count=200)
    np_rng = np.random.default_rng(99)
    for i in range(200):
        inst = batch.row(i)
        sol = project(inst)
        pts = feasible_points(inst, 500, np_rng)
        dists = np.linalg.norm(pts - inst.a, axis=1)
        assert sol.distance <= dists.min() + 1e-9


def test_projection_idempotent():
    theta, batch = random_instance_batch(seed=43, count=100)
    for i in range(100):
        inst = batch.row(i)
        sol = project(inst)
        again = project(
            InstanceBatch(
                g=inst.g[None], h=inst.h[None], a=sol.x_star[None]
            ).row(0)
        )
        assert np.linalg.norm(again.x_star - sol.x_star) <= 1e-9


def test_projection_nonexpansive_in_target():
    theta, batch = random_instance_batch(seed=47, count=100)
    np_rng = np.random.default_rng(5)
    for i in range(100):
        inst = batch.row(i)
        a2 = inst.a + np_rng.normal(scale=0.3, size=2)
        inst2 = InstanceBatch(g=inst.g[None], h=inst.h[None], a=a2[None]).row(0)
        s1, s2 = project(inst), project(inst2)
        assert np.linalg.norm(s1.x_star - s2.x_star) <= np.linalg.norm(inst.a - a2) + 1e-9


def test_batch_project_matches_individual():
    theta, batch = random_instance_batch(seed=53, count=32)
    sols = batch_project(batch)
    assert len(sols) == 32
    for i in (0, 15, 31):
        single = project(batch.row(i))
        assert np.allclose(sols[i].x_star, single.x_star)
        assert sols[i].active_set == single.active_set


def test_batch_project_empty():
    empty = InstanceBatch(
        g=np.zeros((0, 7, 2)), h=np.zeros((0, 7)), a=np.zeros((0, 2))
    )
    assert batch_project(empty) == []


def test_batch_of_identical_instances():
    inst = gen1_instance(0.7, -0.5)
    batch = InstanceBatch(
        g=np.repeat(inst.g[None], 4, axis=0),
        h=np.repeat(inst.h[None], 4, axis=0),
        a=np.repeat(inst.a[None], 4, axis=0),
    )
    sols = batch_project(batch)
    for s in sols[1:]:
        assert np.array_equal(s.x_star, sols[0].x_star)
        assert s.active_set == sols[0].active_set


def test_infeasible_polygon_raises():
    inst = gen1_instance(0.0, 0.0)
    h_bad = inst.h.copy()
    h_bad[0] = -1.0  # forces P <= -1 while P >= 0: empty set
    h_bad[1] = -2.0
    bad = InstanceBatch(g=inst.g[None], h=h_bad[None], a=inst.a[None]).row(0)
    with pytest.raises(InfeasibleInstanceError):
        project(bad)


def test_vertices_are_feasible_extremes():
    inst = gen1_instance(0.0, 0.0)
    verts = polygon_vertices(inst)
    assert len(verts) >= 3
    assert np.all(verts @ inst.g.T - inst.h <= 1e-9)
    # The known corner of generator 1 with p_max = 0.25 present in the set.
    assert any(np.allclose(v, [0.2, 0.3]) for v in verts)
