"""Experiments comparing a phase-indexed inclusion with its phase-averaged counterpart.

Three drivers:

* :func:`run_finite_horizon` measures the largest Hausdorff gap between the
  original and averaged funnels over [t0, t0 + L/eps] for several eps and
  checks that it scales linearly in eps.
* :func:`run_critical_point` extends the horizon to K L / eps for systems whose
  averaged field has a stable critical point and reports the distance of the
  final slice to it.
* :func:`run_invariant_set` does the same for an averaged field with a
  bounded invariant set, where the gap is only expected to stay bounded.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_points, check_positive
from .inclusion import AveragedField, averaging_bound_constant
from .reach import propagate_time
from .sets import CompactSet, directed_hausdorff, hausdorff

FINITE_HORIZON_CLAIM = "original and averaged funnels stay within c*eps on [t0, t0 + L/eps]"
CRITICAL_POINT_CLAIM = "funnels stay O(eps)-close on [t0, inf) when the averaged system converges to a critical point"
INVARIANT_SET_CLAIM = "funnels stay within a constant on [t0, inf) when the averaged system has a bounded invariant set"


@dataclass
class ScalingReport:
    eps_values: list
    max_dH: list
    fitted_c: float
    c_bound: float
    ratios: list
    horizons: list = field(default_factory=list)
    series: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    claim: str = ""

    def __post_init__(self):
        if len(self.eps_values) != len(self.max_dH):
            raise ValueError("eps_values and max_dH must have equal length")

    def to_dict(self):
        return {
            "claim": self.claim,
            "eps_values": [float(e) for e in self.eps_values],
            "max_dH": [float(v) for v in self.max_dH],
            "fitted_c": float(self.fitted_c),
            "c_bound": float(self.c_bound),
            "ratios": [float(r) for r in self.ratios],
            "horizons": [float(v) for v in self.horizons],
            "extras": _plain(self.extras),
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "t", "dH"])
            for eps, ts, gaps in self.series:
                for t, g in zip(ts, gaps):
                    w.writerow([repr(float(eps)), repr(float(t)), repr(float(g))])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _initial_set(system, x0, R0):
    if R0 is not None:
        return R0 if isinstance(R0, CompactSet) else CompactSet(as_points(R0, system.field.dim))
    if x0 is None:
        raise ValueError("give either x0 or R0")
    return CompactSet(np.atleast_1d(np.asarray(x0, dtype=float))[None, :])


def _check_eps(eps_list):
    eps = [float(e) for e in eps_list]
    if len(eps) < 2:
        raise ValueError("need at least two eps values")
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps values must be positive and strictly decreasing")
    return eps


def _check_dt(dt, omega):
    # the phase turns by M*dt per step; ask for at least 80 steps per turn
    limit = 0.1 * 2 * math.pi / (8 * omega.M)
    if dt > limit:
        raise ValueError(f"dt={dt:g} under-resolves the phase rotation; need dt <= {limit:.4g}")


def _paired_funnels(system, eps, horizon, x_init, dt, h, n_phi, record_every, seed, phi0):
    fld = system.field.with_epsilon(eps)
    avg = AveragedField(fld, n_phi)
    kw = dict(phi0=phi0, t0=0.0, T=horizon, dt=dt, h=h, seed=seed, domain=system.domain, record_every=record_every)
    orig = propagate_time(fld, system.omega, x_init, **kw)
    mean = propagate_time(avg, None, x_init, **kw)
    times = orig.params
    gaps = np.array([hausdorff(a, b) for a, b in zip(orig.sets, mean.sets)])
    return orig, mean, times, gaps


def _scaling(eps, max_gaps):
    fitted = max(g / e for g, e in zip(max_gaps, eps))
    ratios = [b / a if a > 0 else math.nan for a, b in zip(max_gaps, max_gaps[1:])]
    return fitted, ratios


def run_finite_horizon(system, eps_list, L=2.0, dt=1e-3, h=5e-3, x0=None, R0=None, n_phi=32, record_every=10,
                       seed=0, phi0=0.0):
    """Largest original/averaged funnel gap over [0, L/eps] for each eps.

    Slices are matched by equal time. ``fitted_c`` is max(max_dH / eps) and
    ``c_bound`` the closed-form constant built from the system's declared
    bounds; the report asserts nothing itself.
    """
    eps = _check_eps(eps_list)
    check_positive(L, "L")
    check_positive(h, "h")
    _check_dt(dt, system.omega)
    x_init = _initial_set(system, x0, R0)
    max_gaps, horizons, series = [], [], []
    for e in eps:
        horizon = L / e
        _, _, times, gaps = _paired_funnels(system, e, horizon, x_init, dt, h, n_phi, record_every, seed, phi0)
        max_gaps.append(float(gaps.max()))
        horizons.append(horizon)
        series.append((e, times, gaps))
    fitted, ratios = _scaling(eps, max_gaps)
    om = system.omega
    c_bound = averaging_bound_constant(om.m, om.M, system.field.bound, max(system.field.lipschitz, 1e-300),
                                       max(om.lipschitz, 1e-300), L)
    return ScalingReport(eps, max_gaps, fitted, c_bound, ratios, horizons, series,
                         {"dt": dt, "h": h, "L": L, "n_phi": n_phi}, FINITE_HORIZON_CLAIM)


def run_critical_point(system, eps_list, critical_point=None, K=4.0, L=2.0, dt=1e-3, h=5e-3, x0=None, R0=None,
                       n_phi=32, record_every=10, seed=0, phi0=0.0):
    """Gap over the extended horizon K L / eps plus final-slice distances to the critical point."""
    if K < 4:
        raise ValueError("horizon multiplier K must be >= 4")
    eps = _check_eps(eps_list)
    _check_dt(dt, system.omega)
    if critical_point is None:
        critical_point = system.info.get("critical_point")
    if critical_point is None:
        raise ValueError("the averaged system needs a declared critical point")
    target = CompactSet(np.atleast_1d(np.asarray(critical_point, dtype=float))[None, :])
    x_init = _initial_set(system, x0, R0)
    max_gaps, short_gaps, horizons, series = [], [], [], []
    final_avg, final_orig = [], []
    for e in eps:
        horizon = K * L / e
        orig, mean, times, gaps = _paired_funnels(system, e, horizon, x_init, dt, h, n_phi, record_every, seed, phi0)
        max_gaps.append(float(gaps.max()))
        short_gaps.append(float(gaps[times <= L / e + 1e-9].max()))
        final_avg.append(hausdorff(mean.last, target))
        final_orig.append(hausdorff(orig.last, target))
        horizons.append(horizon)
        series.append((e, times, gaps))
    fitted, ratios = _scaling(eps, max_gaps)
    extras = {
        "K": K,
        "critical_point": target.points[0].tolist(),
        "final_distance_averaged": final_avg,
        "final_distance_original": final_orig,
        "max_dH_first_window": short_gaps,
        "dt": dt,
        "h": h,
    }
    return ScalingReport(eps, max_gaps, fitted, math.nan, ratios, horizons, series, extras, CRITICAL_POINT_CLAIM)


def run_invariant_set(system, eps_list, invariant_set=None, K=4.0, L=2.0, dt=1e-3, h=5e-3, x0=None, R0=None,
                      n_phi=32, record_every=10, seed=0, phi0=0.0, late_fraction=0.25):
    """Sup-in-time gap between the funnels and how far late slices stray from the invariant set.

    ``late_excess`` is the largest distance from a point of a late slice
    (last ``late_fraction`` of the horizon) to the invariant set, for the
    averaged and the original funnels.
    """
    if K < 4:
        raise ValueError("horizon multiplier K must be >= 4")
    eps = _check_eps(eps_list)
    _check_dt(dt, system.omega)
    inv = invariant_set if invariant_set is not None else system.info.get("invariant_set")
    if inv is None:
        raise ValueError("the averaged system needs a declared invariant set")
    inv = inv if isinstance(inv, CompactSet) else CompactSet(as_points(inv, system.field.dim))
    x_init = _initial_set(system, x0, R0)
    max_gaps, horizons, series = [], [], []
    excess_avg, excess_orig = [], []
    for e in eps:
        horizon = K * L / e
        orig, mean, times, gaps = _paired_funnels(system, e, horizon, x_init, dt, h, n_phi, record_every, seed, phi0)
        late = times >= (1.0 - late_fraction) * horizon
        excess_avg.append(max(_excess(s, inv) for s, keep in zip(mean.sets, late) if keep))
        excess_orig.append(max(_excess(s, inv) for s, keep in zip(orig.sets, late) if keep))
        max_gaps.append(float(gaps.max()))
        horizons.append(horizon)
        series.append((e, times, gaps))
    fitted, ratios = _scaling(eps, max_gaps)
    spread = (max(max_gaps) - min(max_gaps)) / max(max_gaps) if max(max_gaps) > 0 else 0.0
    extras = {
        "K": K,
        "sup_gap_constant": max(max_gaps),
        "sup_gap_spread": spread,
        "late_excess_averaged": excess_avg,
        "late_excess_original": excess_orig,
        "dt": dt,
        "h": h,
    }
    return ScalingReport(eps, max_gaps, fitted, math.nan, ratios, horizons, series, extras, INVARIANT_SET_CLAIM)


def _excess(slice_set, target):
    """Distance from the farthest point of ``slice_set`` to the interval/convex hull ``target``."""
    if target.dim == 1:
        lo, hi = target.points.min(), target.points.max()
        x = slice_set.points[:, 0]
        return float(np.maximum(np.maximum(lo - x, x - hi), 0.0).max())
    return directed_hausdorff(slice_set, target)


def invariance_witness(system, invariant_set, eps, T, dt=1e-3, h=5e-3, n_phi=32, record_every=10):
    """Largest excursion of the averaged funnel started on ``invariant_set`` outside it."""
    inv = invariant_set if isinstance(invariant_set, CompactSet) else CompactSet(invariant_set)
    avg = AveragedField(system.field.with_epsilon(eps), n_phi)
    sol = propagate_time(avg, None, inv, T=T, dt=dt, h=h, domain=system.domain, record_every=record_every)
    return max(_excess(s, inv) for s in sol.sets)
