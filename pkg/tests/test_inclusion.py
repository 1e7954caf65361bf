import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import i0

from geoperiodic.inclusion import (
    AveragedField,
    PhaseVelocity,
    SetValuedField,
    average,
    averaged_support,
    averaging_bound_constant,
    check_periodicity,
    estimate_lipschitz,
)
from geoperiodic.sets import CompactSet, default_grid, hausdorff
from geoperiodic.systems import available_systems, build_system

TWO_PI = 2 * np.pi


def rotating_disc(r, n_ring=64):
    ring = np.stack([np.cos(TWO_PI * np.arange(n_ring) / n_ring), np.sin(TWO_PI * np.arange(n_ring) / n_ring)], 1)

    def fn(phi, x):
        centre = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return centre[:, None, :] + r * ring[None, :, :]

    return SetValuedField(2, fn, 1 + r, 0.0)


def interval_field(lo_fn, hi_fn):
    def fn(phi, x):
        return np.stack([lo_fn(phi), hi_fn(phi)], axis=1)[:, :, None]

    return SetValuedField(1, fn, 10.0, 0.0)


def test_average_of_rotating_disc_is_centred_disc():
    r, n_phi = 0.3, 64
    grid = default_grid(2)
    value = average(rotating_disc(r), [0.0, 0.0], n_phi, grid)
    supports = (value.vertices @ grid.dirs.T).max(axis=0)
    assert np.allclose(supports, r, atol=TWO_PI / n_phi)


def test_average_of_interval_with_cosine_end():
    fld = interval_field(lambda p: np.zeros_like(p), lambda p: 1 + np.cos(p))
    v = average(fld, [0.0], 16).vertices[:, 0]
    assert v.min() == pytest.approx(0.0, abs=1e-12)
    assert v.max() == pytest.approx(1.0, abs=1e-12)


def test_average_of_piecewise_constant_field_matches_fine_sum():
    rng = np.random.default_rng(0)
    K = 8
    lows = rng.uniform(-1, 0, K)
    highs = lows + rng.uniform(0, 1, K)

    def sector(p):
        return np.floor((np.mod(p, TWO_PI)) / (TWO_PI / K) + 1e-12).astype(int) % K

    fld = interval_field(lambda p: lows[sector(p)], lambda p: highs[sector(p)])
    v = average(fld, [0.0], 64).vertices[:, 0]
    fine = TWO_PI * np.arange(640) / 640
    assert v.min() == pytest.approx(lows[sector(fine)].mean(), abs=1e-6)
    assert v.max() == pytest.approx(highs[sector(fine)].mean(), abs=1e-6)


def test_average_rejects_nonconvex_and_coarse_grid():
    fld = interval_field(lambda p: -np.ones_like(p), lambda p: np.ones_like(p))
    with pytest.raises(ValueError):
        average(fld, [0.0], 4)
    with pytest.raises(ValueError):
        average(SetValuedField.union(fld, fld), [0.0], 16)


def test_average_of_phase_independent_field_is_identity():
    rng = np.random.default_rng(1)
    fld = SetValuedField(2, lambda phi, x: np.stack([-x, -x + 0.2, -2 * x], axis=1), 5.0, 2.0)
    for x in rng.uniform(-1, 1, (25, 2)):
        got = CompactSet(average(fld, x, 16).vertices)
        want = CompactSet(fld(0.0, x).vertices)
        assert hausdorff(got, want) <= 1e-12


def test_doubling_n_phi_shrinks_quadrature_error():
    fld = interval_field(lambda p: np.zeros_like(p), lambda p: np.exp(3 * np.cos(p)))
    exact = i0(3.0)
    errs = [abs(average(fld, [0.0], n).vertices.max() - exact) for n in (8, 16)]
    assert errs[1] * 1.5 <= errs[0]


def test_average_vertices_sit_on_support_boundary():
    grid = default_grid(2)
    fld = rotating_disc(0.2, 16)
    x = np.zeros(2)
    verts = average(fld, x, 32, grid).vertices
    h = averaged_support(fld, x, grid.dirs, 32)
    slack = h[None, :] - verts @ grid.dirs.T
    assert slack.min() >= -1e-12
    assert np.all(slack.min(axis=1) <= 1e-12)


def test_support_of_average_is_average_of_supports():
    grid = default_grid(2)
    fld = rotating_disc(0.4, 32)
    x = np.zeros(2)
    verts = average(fld, x, 64, grid).vertices
    fine = averaged_support(fld, x, grid.dirs, 640)
    assert np.abs((verts @ grid.dirs.T).max(axis=0) - fine).max() <= TWO_PI / 64


def test_averaged_field_is_phase_independent():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.1}})
    avg = AveragedField(s.field, 32)
    x = np.array([[0.3]])
    a = avg.vertices(np.array([0.0]), x)
    b = avg.vertices(np.array([1.7]), x)
    assert np.array_equal(a, b)


def test_bound_constant_unit_arguments():
    c = averaging_bound_constant(1, 1, 1, 1, 1, 1)
    assert c == pytest.approx((math.e - 1) * 6 * math.pi + 8 * math.pi, rel=1e-14)
    assert c == pytest.approx(57.53, abs=0.01)


def test_bound_constant_short_horizon_limit():
    assert averaging_bound_constant(1, 1, 2.0, 1, 1, 1e-12) == pytest.approx(16 * math.pi, rel=1e-9)


def test_bound_constant_superlinear_in_bound():
    assert averaging_bound_constant(1, 1, 2, 1, 1, 1) > 2 * averaging_bound_constant(1, 1, 1, 1, 1, 1)


def test_bound_constant_overflow_and_validation():
    assert averaging_bound_constant(1e-3, 1e3, 1, 1e3, 1, 1e3) == math.inf
    with pytest.raises(ValueError):
        averaging_bound_constant(0, 1, 1, 1, 1, 1)


def test_bound_constant_shipped_system():
    s = build_system({"name": "linear_oscillator", "params": {"disturbance": 0.1}, "M_X": 3.1, "lambda": 1.0,
                      "omega": {"m": 1, "M": 1, "lambda_omega": 0.01}})
    c = averaging_bound_constant(1, 1, s.field.bound, s.field.lipschitz, s.omega.lipschitz, 2.0)
    assert c == pytest.approx(330.66, abs=0.01)


def test_estimate_lipschitz_examples():
    const = SetValuedField(1, lambda p, x: np.ones((len(x), 1, 1)), 1.0, 0.0)
    assert estimate_lipschitz(const, ([-1], [1])) == 0.0
    neg = SetValuedField(1, lambda p, x: (-x)[:, None, :], 1.0, 1.0)
    assert estimate_lipschitz(neg, ([-1], [1])) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        estimate_lipschitz(neg, ([0.0], [0.0]))


def test_estimate_lipschitz_is_seeded():
    s = build_system({"name": "pendulum"})
    a = estimate_lipschitz(s.field, s.domain, seed=3)
    assert a == estimate_lipschitz(s.field, s.domain, seed=3)


@pytest.mark.parametrize("name", available_systems())
def test_shipped_systems_respect_declared_constants(name):
    s = build_system({"name": name})
    assert estimate_lipschitz(s.field, s.domain, n_samples=400) <= 1.05 * s.field.lipschitz
    rng = np.random.default_rng(0)
    lo, hi = s.domain
    xs = lo + (hi - lo) * rng.random((300, s.field.dim))
    phis = TWO_PI * rng.random(300)
    v = s.field.vertices(phis, xs)
    assert np.linalg.norm(v, axis=2).max() <= s.field.bound + 1e-12
    gap, ok = check_periodicity(s.field, xs[:20])
    assert ok, gap


def test_unknown_system_lists_available():
    with pytest.raises(ValueError, match="linear_oscillator"):
        build_system({"name": "nope"})
    with pytest.raises(ValueError, match="unknown"):
        build_system({"name": "rotation", "colour": 1})


def test_phase_velocity_bounds():
    om = PhaseVelocity.constant(1.0, 2.0)
    assert om([0.0]) == (1.0, 2.0)
    bad = PhaseVelocity(lambda x: (np.full(len(x), 0.5), np.full(len(x), 1.0)), 1.0, 2.0)
    with pytest.raises(ValueError):
        bad.intervals(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        PhaseVelocity.constant(2.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 2.0))
def test_averaging_commutes_with_constant_shift(x, r):
    # shifting every value by a constant shifts the average by the same constant
    base = interval_field(lambda p: np.cos(p) - r, lambda p: np.cos(p) + r)
    shifted = interval_field(lambda p: np.cos(p) - r + x, lambda p: np.cos(p) + r + x)
    a = average(base, [0.0], 32).vertices[:, 0]
    b = average(shifted, [0.0], 32).vertices[:, 0]
    assert b.min() == pytest.approx(a.min() + x, abs=1e-12)
    assert b.max() == pytest.approx(a.max() + x, abs=1e-12)
