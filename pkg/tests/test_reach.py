import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoperiodic.inclusion import PhaseVelocity, SetValuedField
from geoperiodic.reach import (
    CrossSection,
    DomainExitError,
    RfSolution,
    contains_within,
    graph_distance,
    max_slice_gap,
    periodic_funnel,
    poincare_map,
    propagate_phase,
    propagate_time,
    recurrent_times,
    sample_phase_trajectory,
    sample_trajectory,
    trajectory_funnel,
)
from geoperiodic.sets import CompactSet, directed_hausdorff, hausdorff
from geoperiodic.systems import build_system

TWO_PI = 2 * np.pi


def unit_interval_field():
    return SetValuedField(1, lambda p, x: np.tile(np.array([[-1.0], [1.0]]), (len(x), 1, 1)), 1.0, 0.0)


def decay_field(rate=1.0):
    return SetValuedField(1, lambda p, x: (-rate * x)[:, None, :], 10.0, rate)


def forced_decay():
    # dx/dphi = -x + cos(phi): the periodic orbit passes through 0.5 at phi = 0
    return SetValuedField(1, lambda p, x: (-x + np.cos(p)[:, None])[:, None, :], 5.0, 1.0)


def zero_field(dim=1):
    return SetValuedField(dim, lambda p, x: np.zeros((len(x), 1, dim)), 1.0, 0.0)


def constant_field(value):
    return SetValuedField(1, lambda p, x: np.full((len(x), 1, 1), float(value)), abs(value), 0.0)


def circle_funnel(shift, T=2.0, dt=0.01):
    # singleton slices on the unit circle at angle t + shift
    slices = []
    for t in np.arange(0, T + dt / 2, dt):
        a = t + shift
        slices.append(CrossSection(float(t), CompactSet([[math.cos(a), math.sin(a)]])))
    return RfSolution("time", slices, dt, 0.0)


# propagate_time


def test_interval_velocity_fills_interval():
    dt, h = 0.01, 0.01
    sol = propagate_time(unit_interval_field(), None, [[0.0]], T=1.0, dt=dt, h=h)
    pts = sol.last.points[:, 0]
    assert pts.min() == pytest.approx(-1.0, abs=dt + 2 * h)
    assert pts.max() == pytest.approx(1.0, abs=dt + 2 * h)
    assert hausdorff(sol.last, CompactSet.interval(-1.0, 1.0, h)) <= dt + 2 * h


def test_linear_decay_reaches_exp_minus_one():
    dt, h = 0.001, 0.001
    sol = propagate_time(decay_field(), None, [[1.0]], T=1.0, dt=dt, h=h)
    assert sol.last.points[0, 0] == pytest.approx(math.exp(-1), abs=dt + 2 * h)


def test_rotation_keeps_circle():
    s = build_system({"name": "rotation"})
    R0 = CompactSet.circle([0, 0], 1.0, 64)
    sol = propagate_time(s.field, s.omega, R0, T=1.0, dt=0.001, h=0.01)
    # rotation maps the sampled circle onto itself up to the Euler drift
    assert hausdorff(sol.last, R0) <= 2 * 0.01


def test_time_slices_are_recorded():
    sol = propagate_time(decay_field(), None, [[1.0]], T=1.0, dt=0.01, h=0.01, record_every=10)
    assert len(sol) == 11
    assert sol.param_kind == "time"
    assert np.allclose(sol.params, np.linspace(0, 1, 11))


def test_propagation_validates_arguments():
    with pytest.raises(ValueError):
        propagate_time(decay_field(), None, [[1.0]], T=1.0, dt=0.0)
    with pytest.raises(ValueError):
        propagate_time(decay_field(), None, [[1.0]], T=1.0, h=-1.0)
    with pytest.raises(ValueError):
        propagate_time(decay_field(), None, [[1.0, 2.0]], T=1.0)


def test_domain_exit_raises():
    with pytest.raises(DomainExitError) as info:
        propagate_time(constant_field(1.0), None, [[0.0]], T=5.0, dt=0.01, h=0.01, domain=([-1.0], [1.0]))
    assert 1.0 <= info.value.t <= 1.1


# propagate_phase


def test_zero_field_keeps_initial_set():
    R0 = CompactSet([[0.2], [0.7]])
    sol = propagate_phase(zero_field(), R0, 0.0, TWO_PI, 0.05, 0.01)
    assert hausdorff(sol.last, R0) == 0.0


def test_forced_decay_phase_funnel_converges_to_half():
    sol = propagate_phase(forced_decay(), [[0.5]], 0.0, 3 * TWO_PI, 0.001, 0.001)
    for n in (1, 2, 3):
        assert sol.at(n * TWO_PI).set.points[0, 0] == pytest.approx(0.5, abs=0.002 + 0.001)


def test_phase_rate_interval_spreads_linearly():
    # dx/dphi = 1/omega with omega in [1, 2]: the width grows like phi (1 - 1/2)
    h = 0.002
    om = PhaseVelocity.constant(1.0, 2.0)
    sol = propagate_phase(constant_field(1.0), [[0.0]], 0.0, 2.0, 0.01, h, omega=om)
    for s in sol.slices[1::40]:
        width = np.ptp(s.set.points[:, 0])
        assert width == pytest.approx(s.param * 0.5, abs=2 * h)


# single trajectories


def test_singleton_field_trajectory_ignores_seed():
    a = sample_trajectory(decay_field(), None, [1.0], T=1.0, dt=0.01, seed=1)
    b = sample_trajectory(decay_field(), None, [1.0], T=1.0, dt=0.01, seed=99)
    assert np.array_equal(a.x, b.x)


def test_min_norm_policy_stays_at_zero():
    tr = sample_trajectory(unit_interval_field(), None, [0.0], T=1.0, dt=0.01, policy="min-norm")
    assert np.all(tr.x == 0.0)


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        sample_trajectory(decay_field(), None, [1.0], policy="greedy")


def test_random_trajectories_lie_in_time_funnel():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}})
    dt, h = 0.01, 0.01
    sol = propagate_time(s.field, s.omega, [[0.5]], T=2.0, dt=dt, h=h)
    for seed in range(5):
        tr = sample_trajectory(s.field, s.omega, [0.5], T=2.0, dt=dt, seed=seed)
        for k in range(0, len(tr), 20):
            assert contains_within(sol.slices[k].set, CompactSet(tr.x[k][None, :]), 2 * h + 1e-9)


def test_phase_trajectories_lie_in_phase_funnel():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}})
    dphi, h = 0.01, 0.005
    sol = propagate_phase(s.field, [[0.5]], 0.0, TWO_PI, dphi, h)
    for seed in range(5):
        tr = sample_phase_trajectory(s.field, [0.5], 0.0, TWO_PI, dphi, seed=seed)
        for k in range(0, len(tr), 25):
            assert contains_within(sol.slices[k].set, CompactSet(tr.x[k][None, :]), 2 * h + 1e-9)


# return times


def test_return_times_unit_rate():
    tr = sample_trajectory(zero_field(), PhaseVelocity.constant(1.0, 1.0), [0.0], T=10.0, dt=0.001)
    seq = recurrent_times(tr)
    assert seq.crossings[0] == pytest.approx(TWO_PI, abs=1e-9)
    assert np.allclose(seq.deltas, TWO_PI, atol=1e-9)


def test_return_times_double_rate():
    tr = sample_trajectory(zero_field(), PhaseVelocity.constant(2.0, 2.0), [0.0], T=10.0, dt=0.001)
    assert np.allclose(recurrent_times(tr).deltas, math.pi, atol=1e-9)


def test_return_times_within_rate_bounds():
    tr = sample_trajectory(zero_field(), PhaseVelocity.constant(1.0, 2.0), [0.0], T=20.0, dt=0.001, seed=4)
    seq = recurrent_times(tr, bounds=(1.0, 2.0))
    assert np.all(seq.deltas >= math.pi - 1e-9)
    assert np.all(seq.deltas <= TWO_PI + 1e-9)


def test_return_times_reject_non_monotone_phase():
    tr = sample_trajectory(zero_field(), PhaseVelocity.constant(1.0, 1.0), [0.0], T=10.0, dt=0.01)
    tr.phi[5] = tr.phi[3]
    with pytest.raises(ValueError):
        recurrent_times(tr)


def test_return_times_reject_bound_violation():
    tr = sample_trajectory(zero_field(), PhaseVelocity.constant(2.0, 2.0), [0.0], T=10.0, dt=0.001)
    with pytest.raises(ValueError):
        recurrent_times(tr, bounds=(0.5, 1.5))


# one-cycle map and periodic funnels


def test_poincare_map_of_zero_field_is_identity():
    R0 = CompactSet([[0.1], [0.3]])
    assert hausdorff(poincare_map(zero_field(), R0, dphi=0.1), R0) == 0.0


def test_poincare_map_from_origin():
    dphi, h = 0.001, 0.001
    out = poincare_map(forced_decay(), [[0.0]], dphi=dphi, h=h)
    assert out.points[0, 0] == pytest.approx(0.5 * (1 - math.exp(-TWO_PI)), abs=dphi + 2 * h)


def test_poincare_map_contracts_by_exp_two_pi():
    a = poincare_map(forced_decay(), [[0.0]], dphi=0.001, h=0.001).points[0, 0]
    b = poincare_map(forced_decay(), [[1.0]], dphi=0.001, h=0.001).points[0, 0]
    assert abs(b - a) == pytest.approx(math.exp(-TWO_PI), rel=0.01)


def test_periodic_funnel_of_zero_field_converges_at_once():
    res = periodic_funnel(zero_field(), [[0.3]], tol=0.01, h=0.001, dphi=0.1)
    assert res.converged and res.iterations == 1
    assert res.gaps == [0.0]


def test_periodic_funnel_finds_half():
    res = periodic_funnel(forced_decay(), [[0.0], [1.0]], tol=1e-3, h=1e-4, dphi=1e-3)
    assert res.converged
    assert hausdorff(res.fixed_point, CompactSet([[0.5]])) <= 2e-3
    assert res.to_dict()["converged"] is True


def test_periodic_funnel_reports_divergence():
    grow = SetValuedField(1, lambda p, x: x[:, None, :], 10.0, 1.0)
    res = periodic_funnel(grow, [[0.5]], tol=1e-3, h=1e-4, dphi=0.01, max_iter=3, domain=([-100.0], [100.0]))
    assert not res.converged
    assert res.reason


def test_periodic_funnel_rejects_tolerance_below_resolution():
    with pytest.raises(ValueError):
        periodic_funnel(forced_decay(), [[0.0]], tol=1e-4, h=1e-4)


# graph distance


def test_graph_distance_to_self_is_zero():
    S = circle_funnel(0.0)
    d, T = graph_distance(S, S, 0.1)
    assert d == 0.0 and T == 0.0


def test_graph_distance_finds_time_shift():
    tau = 0.7
    S1, S2 = circle_funnel(0.0, T=4.0), circle_funnel(tau, T=4.0)
    d, T = graph_distance(S1, S2, 0.1, translation_search=(-1.0, 1.0, 0.01))
    assert d <= 0.02
    assert T == pytest.approx(-tau, abs=0.02)


def test_graph_distance_without_search_sees_chord():
    tau = 0.7
    S1, S2 = circle_funnel(0.0), circle_funnel(tau)
    d, T = graph_distance(S1, S2, 0.05)
    # at zero shift every window compares points a chord apart, plus at most eps_g of time
    assert 2 * math.sin(tau / 2) - 0.05 <= d <= 2 * math.sin(tau / 2) + 0.05
    assert T == 0.0


def test_graph_distance_coarse_search_matches_exhaustive():
    S1, S2 = circle_funnel(0.0, T=4.0), circle_funnel(0.45, T=4.0)
    fast = graph_distance(S1, S2, 0.1, translation_search=(-1.0, 1.0, 0.01))
    full = graph_distance(S1, S2, 0.1, translation_search=(-1.0, 1.0, 0.01), exhaustive=True)
    assert fast[0] == pytest.approx(full[0], abs=1e-12)


def test_graph_distance_without_overlap_is_infinite():
    S1 = circle_funnel(0.0, T=1.0)
    d, _ = graph_distance(S1, S1, 0.1, translation_search=(5.0, 5.0, 1.0))
    assert d == math.inf


def test_graph_distance_validation():
    S = circle_funnel(0.0)
    with pytest.raises(ValueError):
        graph_distance(S, S, 0.001)
    P = RfSolution("phase", S.slices, S.step, 0.0)
    with pytest.raises(ValueError):
        graph_distance(S, P, 0.1)


# structural properties


def test_semigroup_in_phase():
    h = 0.002
    fld = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}}).field
    whole = propagate_phase(fld, [[0.0], [0.4]], 0.0, 2.0, 0.01, h)
    first = propagate_phase(fld, [[0.0], [0.4]], 0.0, 1.0, 0.01, h)
    second = propagate_phase(fld, first.last, 1.0, 2.0, 0.01, h)
    assert hausdorff(whole.last, second.last) <= 2 * h


def test_monotone_in_initial_set():
    h = 0.005
    fld = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}}).field
    small = propagate_phase(fld, [[0.0]], 0.0, 3.0, 0.01, h)
    big = propagate_phase(fld, [[0.0], [0.3]], 0.0, 3.0, 0.01, h)
    for a, b in zip(small.sets, big.sets):
        assert directed_hausdorff(a, b) <= 2 * h


def test_seed_does_not_change_funnel():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}})
    a = propagate_time(s.field, s.omega, [[0.5]], T=1.0, dt=0.01, h=0.01, seed=0)
    b = propagate_time(s.field, s.omega, [[0.5]], T=1.0, dt=0.01, h=0.01, seed=123)
    assert max_slice_gap(a, b) == 0.0


def _decay_error(dt, h):
    # x' in [-x - 0.5, -x + 0.5] from [0.5, 1]: exact funnel at t = 1 is an interval
    fld = SetValuedField(1, lambda p, x: np.stack([-x - 0.5, -x + 0.5], axis=1), 5.0, 1.0)
    sol = propagate_time(fld, None, CompactSet.interval(0.5, 1.0, h), T=1.0, dt=dt, h=h)
    e = math.exp(-1)
    lo, hi = 0.5 * e - 0.5 * (1 - e), e + 0.5 * (1 - e)
    pts = sol.last.points[:, 0]
    return max(abs(pts.min() - lo), abs(pts.max() - hi))


def test_refinement_shrinks_error():
    coarse = _decay_error(0.02, 0.02)
    fine = _decay_error(0.01, 0.01)
    assert fine <= 0.6 * coarse


def test_consecutive_slices_move_by_bounded_speed():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.2}})
    h = 0.01
    sol = propagate_time(s.field, s.omega, [[0.0], [0.5]], T=2.0, dt=0.01, h=h)
    limit = (s.field.bound * s.field.epsilon + 1) * sol.step + 2 * h
    for a, b in zip(sol.sets[:-1], sol.sets[1:]):
        assert hausdorff(a, b) <= limit


def test_csv_round_trip(tmp_path):
    s = build_system({"name": "rotation"})
    sol = propagate_time(s.field, s.omega, CompactSet.circle([0, 0], 1.0, 8), T=0.2, dt=0.05, h=0.01)
    path = tmp_path / "rf.csv"
    sol.to_csv(path)
    assert path.read_text().splitlines()[0] == "param,point_index,x1,x2,phi_lo,phi_hi"
    back = RfSolution.from_csv(path)
    assert np.allclose(back.params, sol.params)
    assert max_slice_gap(back, sol) == 0.0


def test_trajectory_funnel_wraps_points():
    tr = sample_trajectory(decay_field(), None, [1.0], T=0.5, dt=0.1)
    S = trajectory_funnel(tr)
    assert len(S) == len(tr)
    assert np.array_equal(S.last.points[0], tr.x[-1])


def test_rf_solution_requires_increasing_params():
    A = CompactSet([[0.0]])
    with pytest.raises(ValueError):
        RfSolution("time", [CrossSection(1.0, A), CrossSection(0.5, A)], 0.5, 0.0)
    with pytest.raises(ValueError):
        RfSolution("space", [CrossSection(1.0, A)], 0.5, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.5, 1.5), st.integers(0, 10_000))
def test_random_trajectory_contained_in_funnel(x0, seed):
    fld = SetValuedField(1, lambda p, x: np.stack([-x - 0.3, -x + 0.3 * np.cos(p)[:, None]], axis=1), 5.0, 1.0)
    h = 0.01
    sol = propagate_phase(fld, [[x0]], 0.0, 3.0, 0.02, h)
    tr = sample_phase_trajectory(fld, [x0], 0.0, 3.0, 0.02, seed=seed)
    for k in range(len(tr)):
        assert contains_within(sol.slices[k].set, CompactSet(tr.x[k][None, :]), 2 * h + 1e-9)
