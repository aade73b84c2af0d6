import math

import numpy as np
import pytest

from tll_sizer.dynamics import (ControlSystem, Trajectory, constant_offset, deviation_check, estimate_bounds,
                                expert_controller, invariance_check, measure_lipschitz,
                                pendulum_interval_bounds, simulate)
from tll_sizer.errors import DivergedError
from tll_sizer.sizing import SystemBounds, derive_tau_eta, gronwall_bound, solve_mu
from tll_sizer.utils import Box, DomainBox, halton_points


def _scalar_system(rate):
    return ControlSystem(domain=DomainBox((-1.0,), (1.0,), m=1), control_box=Box((-1.0,), (1.0,)),
                         vector_field=lambda x, u: rate * x, name='scalar')


ZERO = lambda x: np.zeros(1)


def test_rk4_is_fourth_order():
    system = _scalar_system(-1.0)
    errors = []
    for dt in (0.1, 0.05):
        traj = simulate(system, ZERO, [1.0], 1.0, dt)
        errors.append(abs(traj.final_state[0] - math.exp(-1.0)))
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_trajectory_shapes_and_csv(tmp_path, pendulum, pendulum_params):
    traj = simulate(pendulum, expert_controller(pendulum_params), [0.2, 0.1], 0.1, 0.01)
    assert traj.t.shape == (11,)
    assert traj.x.shape == (11, 2)
    assert traj.u.shape == (11, 1)
    assert traj.header() == ['t', 'x1', 'x2', 'u1']
    path = traj.to_csv(str(tmp_path / 'traj.csv'))
    lines = open(path, encoding='utf-8').read().splitlines()
    assert lines[0] == 't,x1,x2,u1'
    assert len(lines) == 12


def test_equilibrium_stays_put(pendulum, pendulum_params):
    traj = simulate(pendulum, expert_controller(pendulum_params), [0.0, 0.0], 2.0, 0.01)
    assert np.max(np.abs(traj.x)) <= 1e-6


@pytest.mark.parametrize("x0", [(0.7, 0.5), (-0.4, 1.0)])
def test_expert_enters_and_remains_in_target(pendulum, pendulum_params, x0):
    traj = simulate(pendulum, expert_controller(pendulum_params), x0, 10.0, 0.005)
    entered, entry_time = traj.enters_and_remains(Box((-1.0, -0.5), (1.0, 0.5)))
    assert entered
    assert entry_time < 10.0
    assert np.max(np.abs(traj.final_state)) < 1e-3


def test_enters_and_remains():
    t = np.arange(4, dtype=float)
    target = Box((-1.0,), (1.0,))
    traj = Trajectory(t=t, x=np.array([[3.0], [0.5], [2.0], [0.1]]), u=np.zeros((4, 1)))
    assert traj.enters_and_remains(target) == (True, 3.0)
    left = Trajectory(t=t, x=np.array([[0.0], [0.5], [0.2], [3.0]]), u=np.zeros((4, 1)))
    assert left.enters_and_remains(target) == (False, None)


def test_divergence_is_reported():
    with pytest.raises(DivergedError) as info:
        simulate(_scalar_system(10.0), ZERO, [1.0], 2.0, 0.01)
    assert 0.0 < info.value.time < 2.0


def test_zero_order_hold_keeps_the_input_constant(pendulum, pendulum_params):
    traj = simulate(pendulum, expert_controller(pendulum_params), [0.5, 0.0], 0.2, 0.01, hold=0.05)
    assert np.all(traj.u[0:5] == traj.u[0])
    assert traj.u[5, 0] != traj.u[0, 0]


def test_simulate_ends_exactly_at_the_horizon():
    traj = simulate(_scalar_system(-1.0), ZERO, [1.0], 0.25, 0.1)
    np.testing.assert_allclose(traj.t, [0.0, 0.1, 0.2, 0.25])
    assert traj.final_state[0] == pytest.approx(math.exp(-0.25), rel=1e-6)
    assert len(traj.u) == 4


def test_simulate_rejects_bad_steps(pendulum):
    with pytest.raises(ValueError):
        simulate(pendulum, ZERO, [0.0, 0.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        simulate(pendulum, ZERO, [0.0, 0.0], 0.001, 0.01)


def test_sampled_bounds_stay_within_interval_bounds(pendulum, pendulum_params, pendulum_domain, control_box):
    sampled = estimate_bounds(pendulum, 21, k_cont=0.1)
    k_x, k_u, k_vf = pendulum_interval_bounds(pendulum_params, pendulum_domain, control_box)
    assert sampled.k_u == pytest.approx(4.0)
    assert sampled.k_x <= k_x
    assert sampled.k_vf <= k_vf
    assert sampled.k_cont == 0.1


def test_finite_difference_bounds_match_analytic(pendulum):
    no_jacobian = ControlSystem(domain=pendulum.domain, control_box=pendulum.control_box,
                                vector_field=pendulum.vector_field)
    analytic = estimate_bounds(pendulum, 5, k_cont=0.1)
    numeric = estimate_bounds(no_jacobian, 5, k_cont=0.1)
    assert numeric.k_x == pytest.approx(analytic.k_x, rel=1e-6)
    assert numeric.k_u == pytest.approx(analytic.k_u, rel=1e-6)


def test_measure_lipschitz_of_a_linear_law(pendulum_domain):
    law = lambda x: np.array([2.0 * x[0] - 3.0 * x[1]])
    assert measure_lipschitz(law, pendulum_domain, grid_per_axis=11) == pytest.approx(5.0)


def test_expert_is_far_from_the_nominal_lipschitz_budget(pendulum_domain, pendulum_params):
    assert measure_lipschitz(expert_controller(pendulum_params), pendulum_domain, grid_per_axis=21) > 0.1


def test_constant_offset():
    shifted = constant_offset(ZERO, 0.25)
    assert shifted(np.zeros(1))[0] == 0.25


# --- Deviation and invariance ---

@pytest.mark.parametrize("kappa", [0.05, 0.2, 0.35])
def test_deviation_respects_gronwall(pendulum, pendulum_params, pendulum_domain, control_box, kappa):
    k_x, k_u, k_vf = pendulum_interval_bounds(pendulum_params, pendulum_domain, control_box)
    bounds = SystemBounds(k_x=k_x, k_u=k_u, k_vf=k_vf, k_cont=0.1)
    tau, _ = derive_tau_eta(0.35, bounds)
    expert = expert_controller(pendulum_params)
    starts = halton_points(pendulum_domain, 34, seed=7)
    report = deviation_check(pendulum, expert, constant_offset(expert, kappa), tau, starts)
    assert report.num_samples == 34
    # equal at t = 0; the closed loops then drift apart by O(K_u kappa tau)
    assert kappa * (1 - 1e-9) <= report.max_control_gap <= 1.25 * kappa
    assert 0.0 < report.max_deviation <= gronwall_bound(kappa, tau, k_x, k_u)


def test_deviation_below_delta_along_the_sizing_chain(pendulum, pendulum_params, pendulum_domain, control_box):
    k_x, k_u, k_vf = pendulum_interval_bounds(pendulum_params, pendulum_domain, control_box)
    bounds = SystemBounds(k_x=k_x, k_u=k_u, k_vf=k_vf, k_cont=0.1, delta=0.5)
    mu = solve_mu(bounds)
    tau, _ = derive_tau_eta(mu, bounds)
    expert = expert_controller(pendulum_params)
    starts = halton_points(pendulum_domain, 10, seed=8)
    report = deviation_check(pendulum, expert, constant_offset(expert, mu / 3), tau, starts)
    assert report.max_deviation <= bounds.delta


def test_invariance_report(pendulum, pendulum_params, pendulum_domain):
    report = invariance_check(pendulum, expert_controller(pendulum_params), pendulum_domain,
                              delta=0.1, tau=0.02, samples=8, seed=0)
    assert report.num_edge == 8
    assert report.num_interior <= 8
    assert report.verdict == (report.edge_ok and report.interior_ok)
    data = report.to_dict()
    assert set(data) >= {'verdict', 'worst_state', 'worst_margin'}


def test_invariance_rejects_large_delta(pendulum, pendulum_params, pendulum_domain):
    with pytest.raises(ValueError):
        invariance_check(pendulum, expert_controller(pendulum_params), pendulum_domain, delta=1.0, tau=0.01)


def test_excursion_within_eta_up_to_eta_over_kvf(pendulum, pendulum_params, pendulum_domain, control_box):
    _, _, k_vf = pendulum_interval_bounds(pendulum_params, pendulum_domain, control_box)
    eta = 0.25
    push = lambda x: np.array([6.0])
    pull = lambda x: np.array([-6.0])
    starts = halton_points(pendulum_domain, 20, seed=3)
    report = deviation_check(pendulum, push, pull, eta / k_vf, starts)
    assert 0.0 < report.max_excursion <= eta
    assert report.to_dict()['max_excursion'] == report.max_excursion


def test_invariance_fails_for_a_stationary_field():
    report = invariance_check(_scalar_system(0.0), ZERO, DomainBox((-1.0,), (1.0,), m=1),
                              delta=0.1, tau=0.5, samples=20, seed=1)
    assert report.verdict is False
    assert report.edge_ok is False
    assert report.worst_margin < 0.0


def test_invariance_holds_for_a_contracting_field():
    report = invariance_check(_scalar_system(-1.0), ZERO, DomainBox((-1.0,), (1.0,), m=1),
                              delta=0.1, tau=0.5, samples=20, seed=1)
    assert report.verdict is True
    assert report.edge_ok and report.interior_ok
    assert report.num_interior > 0
    assert report.worst_margin > 0.0
