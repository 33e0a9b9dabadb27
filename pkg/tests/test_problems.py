import numpy as np
import pytest
import scipy.sparse.linalg as spla
from scipy.optimize import root

from lvpp import discretize as dz
from lvpp.entropy import grad_R_star
from lvpp.loop import LvppConfig, run_lvpp
from lvpp.presets import get_preset
from lvpp.problems.eikonal import build_eikonal, eikonal_schedule
from lvpp.problems.gradient import build_gradient_constraint, build_intersection, intersection_bump
from lvpp.problems.multiphase import (
    MultiphaseData,
    block_initial_phases,
    build_multiphase_step,
    check_simplex,
    run_multiphase,
)
from lvpp.problems.obstacle import (
    BuildError,
    ObstacleData,
    benchmark_data,
    benchmark_obstacle,
    build_obstacle,
    complementarity,
)
from lvpp.problems.oracles import distance_to_boundary
from lvpp.problems.qvi import HeatTransfer, QviData, build_qvi_thermoforming, qvi_residuals, qvi_schedule
from lvpp.schedule import AlphaSchedule


def const(c):
    return lambda p: np.full(len(p), float(c))


# -- obstacle ---------------------------------------------------------------------


def test_benchmark_obstacle_formula():
    b = 9 / 20
    d = np.sqrt(0.25 - b * b)
    assert benchmark_obstacle(np.array([0.0, 0.0])) == pytest.approx(0.5)
    # the two branches meet continuously at r = b
    r = np.array([[b - 1e-9, 0.0], [b + 1e-9, 0.0]])
    v = benchmark_obstacle(r)
    assert v[0] == pytest.approx(d, abs=1e-6) and v[1] == pytest.approx(d, abs=1e-6)
    assert benchmark_obstacle(np.array([1.0, 1.0])) < 0


def test_infeasible_boundary_data_rejected():
    with pytest.raises(BuildError):
        build_obstacle(ObstacleData(const(0.5), f=0.0, n=5))
    with pytest.raises(BuildError):
        build_obstacle(ObstacleData(const(-2.0), const(-1.0), n=5, backend="p1"))
    with pytest.raises(BuildError):
        build_obstacle(ObstacleData(const(-1.0), backend="spectral"))


def test_bilateral_strictly_inside():
    prob = build_obstacle(ObstacleData(const(-1.0), const(1.0), f=200.0, backend="p1", n=16))
    res = run_lvpp(prob, LvppConfig(AlphaSchedule.double_exponential(), tol=1e-9))
    assert res.trace.converged
    ut = res.recovered
    assert np.all(ut > -1.0) and np.all(ut < 1.0)
    assert ut.max() > 0.99  # the upper obstacle is active


@pytest.mark.parametrize("backend,n", [("fd", 31), ("p1", 16)])
def test_complementarity_at_convergence(backend, n):
    tol = 1e-9
    prob = build_obstacle(benchmark_data(n, backend))
    res = run_lvpp(prob, LvppConfig(AlphaSchedule.double_exponential(), tol=tol))
    assert res.trace.converged
    assert complementarity(prob, res.state, res.previous, res.alpha) <= 10 * tol


def test_fd_and_p1_agree_to_first_order():
    diffs = []
    for n in (8, 16, 32):
        fd = build_obstacle(benchmark_data(n - 1, "fd"))
        fe = build_obstacle(benchmark_data(n, "p1"))
        cfg = LvppConfig(AlphaSchedule.double_exponential(), tol=1e-9)
        u_fd = run_lvpp(fd, cfg).u
        u_fe = run_lvpp(fe, LvppConfig(AlphaSchedule.double_exponential(), tol=1e-9)).u
        # both orderings are x-fastest over the same interior nodes
        np.testing.assert_allclose(fd.data["points"], fe.data["points"], atol=1e-14)
        h = 2.0 / n
        diffs.append(np.abs(u_fd - u_fe).max())
        assert diffs[-1] <= h
    # on this mesh the P1 stiffness is h^2 times the 5-point stencil and the
    # nodal latent relations coincide, so with f = 0 the two agree to rounding
    assert max(diffs) <= 1e-10


# -- gradient constraint --------------------------------------------------------------


def test_gradient_bound_must_be_positive():
    with pytest.raises(BuildError):
        build_gradient_constraint(4, phi=lambda p: p[:, 0] - 0.5)


def test_gradient_inactive_matches_poisson():
    f = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    prob = build_gradient_constraint(16, f=f, phi=const(100.0))
    res = run_lvpp(prob, LvppConfig(AlphaSchedule.geometric(1.0, 2.0), tol=1e-10))
    asm = prob.data["assembly"]
    u_ref = spla.spsolve(asm.K0.tocsc(), asm.F)
    assert np.abs(res.u - u_ref).max() <= 1e-8
    norms = np.linalg.norm(res.recovered, axis=1)
    assert not np.any(norms >= 100.0 - 1e-8)


def test_gradient_zero_force():
    prob = build_gradient_constraint(8, f=0.0)
    res = run_lvpp(prob, get_preset("gradient").config())
    assert res.trace.converged and res.trace.outer_iterations == 1
    assert np.abs(res.state).max() == 0.0


def test_gradient_reference_data_has_active_set():
    prob = build_gradient_constraint(24)
    res = run_lvpp(prob, get_preset("gradient").config())
    assert res.trace.converged
    phi = prob.data["radius"]
    norms = np.linalg.norm(res.recovered, axis=1)
    assert np.all(norms < phi)
    assert np.any(norms >= phi - 1e-8)


# -- intersection -------------------------------------------------------------------


def test_intersection_bump_normalised():
    assert intersection_bump(0.5) == pytest.approx(1.0, abs=1e-15)
    assert intersection_bump(0.2) == 0.0 and intersection_bump(0.9) == 0.0


def test_intersection_without_slope_cap_matches_obstacle():
    n = 100
    cfg = get_preset("intersection").config()
    both = build_intersection(n, phi_c=100.0)
    u_both = run_lvpp(both, cfg).u
    obst = build_obstacle(
        ObstacleData(lambda p: intersection_bump(p[..., 0]), f=0.0, box=(0.0, 1.0), backend="p1", n=n)
    )
    u_obst = run_lvpp(obst, LvppConfig(AlphaSchedule.geometric(1.0, 2.0), tol=1e-10)).u
    assert np.abs(u_both - u_obst).max() <= 1e-8


def test_intersection_slope_cap_lowers_u_at_0_2():
    n = 100
    node = 20  # x = 0.2
    values = []
    for phi_c in (100.0, 3.0, 2.15, 2.0):
        prob = build_intersection(n, phi_c=phi_c)
        assert prob.data["mesh"].points[node, 0] == pytest.approx(0.2)
        res = run_lvpp(prob, get_preset("intersection").config())
        assert res.trace.converged
        values.append(prob.data["full"](res.u)[node])
    # the free slope near x = 0.2 is about 2.19, so the cap binds only below that
    assert all(b <= a + 1e-10 for a, b in zip(values, values[1:])), values
    assert values[2] < values[1] - 1e-3 and values[3] < values[2] - 1e-3, values


def test_intersection_latents_strictly_feasible():
    prob = build_intersection(100, phi_c=2.0)
    res = run_lvpp(prob, get_preset("intersection").config())
    assert res.trace.converged
    assert all(r.min_margin > 0 for r in res.trace.rows)
    asm = prob.data["assembly"]
    slopes = np.abs(res.recovered[:, 0])
    assert np.all(slopes < prob.data["radius"])
    psi0 = res.state[prob.blocks["psi0"]]
    u0 = grad_R_star(asm.lower, asm.node_pts, psi0[:, None])[:, 0]
    assert np.all(u0 > intersection_bump(asm.node_pts[:, 0]))


# -- eikonal --------------------------------------------------------------------------


def test_eikonal_schedule_values():
    s = eikonal_schedule()
    assert [s.next_alpha(k) for k in range(1, 6)] == [20.0, 40.0, 50.0, 50.0, 50.0]


def test_eikonal_interval_distance():
    prob = build_eikonal(64, box=(0.0, 1.0))
    res = run_lvpp(prob, get_preset("eikonal").config())
    assert res.trace.converged
    u = prob.data["full"](res.u)
    assert u.max() == pytest.approx(0.5, abs=1e-2)
    x = prob.data["mesh"].points[:, 0]
    assert np.abs(u - np.minimum(x, 1 - x)).max() <= 2e-2


def test_eikonal_square_below_distance():
    prob = build_eikonal(16)
    res = run_lvpp(prob, get_preset("eikonal").config())
    u = prob.data["full"](res.u)
    d = distance_to_boundary(prob.data["mesh"].points)
    assert 0.9 <= u.max() / d.max() <= 1.0


# -- oracles --------------------------------------------------------------------------


def test_distance_examples():
    assert distance_to_boundary([0.5, 0.5]) == pytest.approx(0.5)
    assert distance_to_boundary([1.0, 0.3]) == 0.0
    assert distance_to_boundary([0.25, 0.5]) == pytest.approx(0.25)
    np.testing.assert_allclose(distance_to_boundary(np.array([0.1, 0.7]), box=(0.0, 1.0)), [0.1, 0.3])
    with pytest.raises(ValueError):
        distance_to_boundary([1.5, 0.5])


# -- multiphase -----------------------------------------------------------------------


def _multiphase_cfg():
    return get_preset("multiphase").config()


def test_block_initial_data_on_simplex():
    m = dz.build_tri_mesh(8)
    u0 = block_initial_phases(m.points, 1 / 32)
    assert check_simplex(u0) and np.all(u0 > 0)


def test_multiphase_small_run_invariants():
    data = MultiphaseData(n=12, steps=2)
    run = run_multiphase(data, _multiphase_cfg())
    M = dz.assemble_p1_mass(data.mesh)
    mass0 = (M @ data.u0).sum(axis=0)
    for u, lat in zip(run.phases[1:], run.latent[1:]):
        assert np.abs(lat.sum(axis=1) - 1.0).max() <= 1e-12
        assert np.all(lat > 0)
        assert np.abs((M @ u).sum(axis=0) - mass0).max() <= 1e-8
    assert all(c <= 10 for c in run.proximal_counts)


def test_multiphase_two_phase_swap_equivariance():
    mesh = dz.build_tri_mesh(8)
    a = 0.5 * (1 - np.tanh((mesh.points[:, 0] - 0.4) / 0.05))
    u0 = np.column_stack([a, 1 - a])
    runs = []
    for init in (u0, u0[:, ::-1]):
        data = MultiphaseData(m=2, n=8, steps=1, u0=init, mesh=mesh)
        runs.append(run_multiphase(data, _multiphase_cfg()))
    np.testing.assert_allclose(runs[0].phases[1], runs[1].phases[1][:, ::-1], atol=1e-10)


def test_multiphase_rejects_off_simplex():
    data = MultiphaseData(n=4, steps=1)
    bad = data.u0.copy()
    bad[0, 0] += 1e-6
    with pytest.raises(BuildError):
        build_multiphase_step(data, bad)
    with pytest.raises(BuildError):
        MultiphaseData(m=3, n=4)
    with pytest.raises(BuildError):
        MultiphaseData(m=1, n=4)


# -- QVI ------------------------------------------------------------------------------


def test_heat_transfer_curve():
    g = HeatTransfer()
    np.testing.assert_allclose(g([-1.0, 0.0, 0.005, 0.01, 1.0]), [1, 1, 0.5, 0, 0])
    np.testing.assert_allclose(g.derivative([0.0, 0.005, 0.01, 0.02]), [0, -100, -100, 0])


def test_qvi_data_validation():
    with pytest.raises(BuildError):
        QviData(beta=0.0)

    class Rising:
        def __call__(self, s):
            return np.asarray(s, dtype=float)

        def derivative(self, s):
            return np.ones_like(np.asarray(s, dtype=float))

    with pytest.raises(BuildError):
        QviData(g=Rising())
    with pytest.raises(BuildError):
        HeatTransfer(width=0.0)


def test_qvi_initial_state():
    prob = build_qvi_thermoforming(QviData(n=6))
    assert np.all(prob.block(prob.x0, "T") == 1.0)
    assert np.all(prob.block(prob.x0, "u") == 0.0)


def test_qvi_schedule_values():
    s = qvi_schedule()
    assert [s.next_alpha(k) for k in (1, 2, 3)] == [2.0**-6, 2.0**-4, 2.0**-2]


def test_qvi_zero_force_decouples():
    data = QviData(n=12, f=0.0)
    prob = build_qvi_thermoforming(data)
    res = run_lvpp(prob, get_preset("qvi").config())
    assert res.trace.converged
    assert np.abs(res.u).max() <= 1e-4
    # standalone nonlinear heat solve with the membrane at rest (u = 0)
    d = prob.data
    mesh = d["mesh"]
    H = (d["stiffness"] + data.beta * d["mass"]).tocsr()
    ml = d["lumped"]
    xi = data.xi(mesh.points)
    phi0 = data.mold(mesh.points)
    sol = root(lambda T: H @ T - ml * data.g(phi0 + xi * T), np.ones(mesh.num_points), tol=1e-13)
    assert sol.success
    np.testing.assert_allclose(prob.block(res.state, "T"), sol.x, atol=1e-6)


def test_qvi_converged_residuals():
    prob = build_qvi_thermoforming(QviData(n=16))
    res = run_lvpp(prob, get_preset("qvi").config())
    assert res.trace.converged
    r = qvi_residuals(prob, res.state)
    assert max(r["heat"], r["feasibility"], r["sign"]) <= 1e-4, r
    phi = prob.data["mold"](res.state)[prob.data["mesh"].interior]
    assert np.all(res.recovered < phi)
