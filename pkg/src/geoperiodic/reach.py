"""Reachable-set propagation (integral funnels), trajectories, Poincare maps and graph distances.

Propagation is explicit Euler on sets: every stored point is pushed along every
vertex of the field value and, in time mode, every phase rate in
{lo, mid, hi}; the union is then pruned back to an h-net.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import as_points, as_vector, check_box, check_positive
from .sets import (
    CompactSet,
    default_grid,
    directed_hausdorff,
    hausdorff,
    project_onto_hull,
    prune_points,
)

TWO_PI = 2.0 * np.pi


class DomainExitError(RuntimeError):
    """A propagated point left the declared domain."""

    def __init__(self, t, x):
        self.t = float(t)
        self.x = np.asarray(x, dtype=float)
        super().__init__(f"state left the domain at param={self.t:.6g}: x={self.x.tolist()}")


@dataclass
class CrossSection:
    param: float
    set: CompactSet
    phase_window: tuple = None


@dataclass
class RfSolution:
    """Sequence of cross-sections of an integral funnel, indexed by time or phase."""

    param_kind: str
    slices: list
    step: float
    resolution: float
    seed: int = 0

    def __post_init__(self):
        if self.param_kind not in ("time", "phase"):
            raise ValueError("param_kind must be 'time' or 'phase'")
        if not self.slices:
            raise ValueError("an Rf-solution needs at least one slice")
        p = self.params
        if np.any(np.diff(p) <= 0):
            raise ValueError("slice parameters must be strictly increasing")

    @property
    def params(self):
        return np.array([s.param for s in self.slices])

    @property
    def sets(self):
        return [s.set for s in self.slices]

    @property
    def last(self):
        return self.slices[-1].set

    @property
    def dim(self):
        return self.slices[0].set.dim

    def __len__(self):
        return len(self.slices)

    def at(self, param):
        """Slice whose parameter is nearest ``param``."""
        i = int(np.argmin(np.abs(self.params - param)))
        return self.slices[i]

    def to_csv(self, path):
        dim = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "point_index"] + [f"x{i + 1}" for i in range(dim)] + ["phi_lo", "phi_hi"])
            for s in self.slices:
                lo, hi = s.phase_window if s.phase_window is not None else (s.param, s.param)
                for i, p in enumerate(s.set.points):
                    w.writerow([repr(float(s.param)), i] + [repr(float(v)) for v in p] + [repr(lo), repr(hi)])

    @classmethod
    def from_csv(cls, path, param_kind="time", resolution=0.0, step=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if header[:2] != ["param", "point_index"] or header[-2:] != ["phi_lo", "phi_hi"]:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array(rows[1:], dtype=float)
        dim = len(header) - 4
        slices = []
        for p in np.unique(data[:, 0]):
            block = data[data[:, 0] == p]
            window = (float(block[0, -2]), float(block[0, -1]))
            slices.append(CrossSection(float(p), CompactSet(block[:, 2 : 2 + dim], resolution), window))
        if step is None:
            step = float(np.min(np.diff([s.param for s in slices]))) if len(slices) > 1 else 1.0
        return cls(param_kind, slices, step, resolution)


def _n_steps(span, step):
    if span <= 0:
        raise ValueError("propagation span must be positive")
    n = max(int(math.ceil(span / step - 1e-9)), 1)
    return n, span / n


def _check_domain(x, domain, param):
    if domain is None:
        return
    lo, hi = domain
    below, above = x < lo - 1e-12, x > hi + 1e-12
    if below.any() or above.any():
        bad = np.any(below | above, axis=1)
        raise DomainExitError(param, x[np.argmax(bad)])


def _omega_choices(omega, x):
    if omega is None:
        return np.ones((x.shape[0], 1))
    if omega.constant_interval is not None:
        lo, hi = omega.constant_interval
        row = [lo] if lo == hi else [lo, 0.5 * (lo + hi), hi]
        return np.tile(np.array(row), (x.shape[0], 1))
    lo, hi = omega.intervals(x)
    if np.all(lo == hi):
        return lo[:, None]
    return np.stack([lo, 0.5 * (lo + hi), hi], axis=1)


class _Pruner:
    """Caches direction grids so the per-step prune stays cheap."""

    def __init__(self, h):
        self.h = h
        self._grids = {}

    def __call__(self, pts):
        d = pts.shape[1]
        if d not in self._grids:
            self._grids[d] = default_grid(d).dirs
        # a dense h-net always has a kept point within 2.5h further along any direction
        return prune_points(pts, self.h, self._grids[d], exempt_support=True, local_radius=3 * self.h)


def propagate_time(field, omega, R0, phi0=0.0, t0=0.0, T=1.0, dt=0.01, h=0.01, seed=0, domain=None,
                   record_every=1):
    """Time-parameterized funnel of x' in eps X(phi, x), phi' in Omega(x) starting from R0 x {phi0}.

    Each slice stores the state cloud and the interval hull of the phases
    reached at that time. The fan-out is canonically sorted before pruning,
    so the result never depends on ``seed``; it is only recorded.
    """
    check_positive(dt, "dt")
    h = check_positive(h, "h")
    R0 = R0 if isinstance(R0, CompactSet) else CompactSet(as_points(R0, field.dim))
    if R0.dim != field.dim:
        raise ValueError("initial set dimension does not match the field")
    domain = check_box(domain, field.dim)
    n, step = _n_steps(T - t0, dt)
    prune = _Pruner(h)
    eps = field.epsilon
    x = R0.points.copy()
    _check_domain(x, domain, t0)
    phi = np.full(x.shape[0], float(phi0))
    slices = [CrossSection(float(t0), R0, (float(phi0), float(phi0)))]
    d = field.dim
    for k in range(1, n + 1):
        t_prev = t0 + (k - 1) * step
        verts = field.vertices(phi, x)
        rates = _omega_choices(omega, x)
        nk, nq = verts.shape[1], rates.shape[1]
        new_x = (x[:, None, :] + (step * eps) * verts).reshape(-1, d)
        if nq == 1 and phi.min() == phi.max() and np.all(rates == rates[0, 0]):
            # every branch shares one phase: stay in state space
            _check_domain(new_x, domain, t_prev + step)
            x = prune(new_x)
            phi = np.full(x.shape[0], phi[0] + step * rates[0, 0])
        else:
            new_x = np.repeat(new_x, nq, axis=0)
            new_phi = np.repeat(phi[:, None] + step * rates, nk, axis=0).reshape(-1)
            _check_domain(new_x, domain, t_prev + step)
            joint = prune(np.column_stack([new_x, new_phi]))
            x, phi = joint[:, :d], joint[:, d]
        if k % record_every == 0 or k == n:
            t = t0 + k * step
            pts = x if np.ptp(phi) == 0.0 else prune(x)
            slices.append(CrossSection(t, CompactSet(pts, h), (float(phi.min()), float(phi.max()))))
    return RfSolution("time", slices, step * record_every, h, seed)


def propagate_phase(field, R0, phi0=0.0, phi_end=TWO_PI, dphi=0.01, h=0.01, omega=None, seed=0, domain=None,
                    record_every=1):
    """Phase-parameterized funnel of dx/dphi in k X(phi, x), 1/k in Omega(x).

    Without ``omega`` the rate factor is 1. The slow-time factor of the field
    plays no role here.
    """
    check_positive(dphi, "dphi")
    h = check_positive(h, "h")
    R0 = R0 if isinstance(R0, CompactSet) else CompactSet(as_points(R0, field.dim))
    if R0.dim != field.dim:
        raise ValueError("initial set dimension does not match the field")
    domain = check_box(domain, field.dim)
    n, step = _n_steps(phi_end - phi0, dphi)
    prune = _Pruner(h)
    x = R0.points.copy()
    _check_domain(x, domain, phi0)
    slices = [CrossSection(float(phi0), R0)]
    d = field.dim
    for k in range(1, n + 1):
        phi = phi0 + (k - 1) * step
        verts = field.vertices(np.full(x.shape[0], phi), x)
        factors = 1.0 / _omega_choices(omega, x)
        moves = verts[:, :, None, :] * factors[:, None, :, None]
        new_x = (x[:, None, None, :] + step * moves).reshape(-1, d)
        _check_domain(new_x, domain, phi + step)
        x = new_x if new_x.shape[0] == 1 else prune(new_x)
        if k % record_every == 0 or k == n:
            slices.append(CrossSection(phi0 + k * step, CompactSet(x, h)))
    return RfSolution("phase", slices, step * record_every, h, seed)


@dataclass
class Trajectory:
    params: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    selection_seed: int = 0
    param_kind: str = "time"

    def __len__(self):
        return len(self.params)


POLICIES = ("random", "min-norm", "max-norm", "extreme-omega")


def _select(verts, rates, policy, rng):
    """One velocity and one phase rate from a field value and its rate choices."""
    if policy == "random":
        return verts[rng.integers(len(verts))], rates[rng.integers(len(rates))]
    if policy == "min-norm":
        v, _ = project_onto_hull(verts, np.zeros(verts.shape[1]))
        return v, rates[len(rates) // 2]
    if policy == "max-norm":
        return verts[int(np.argmax(np.linalg.norm(verts, axis=1)))], rates[len(rates) // 2]
    if policy == "extreme-omega":
        return verts[rng.integers(len(verts))], rates[-1]
    raise ValueError(f"unknown selection policy {policy!r}; choose from {POLICIES}")


def sample_trajectory(field, omega, x0, phi0=0.0, t0=0.0, T=1.0, dt=0.01, seed=0, policy="random", domain=None):
    """One Euler trajectory picking a vertex and a phase rate per step.

    Rates are drawn from the same {lo, mid, hi} choices the funnel uses, so
    every trajectory is one branch of the propagated fan-out.
    """
    check_positive(dt, "dt")
    x = as_vector(x0, field.dim).copy()
    domain = check_box(domain, field.dim)
    n, step = _n_steps(T - t0, dt)
    rng = np.random.default_rng(seed)
    xs = np.empty((n + 1, field.dim))
    phis = np.empty(n + 1)
    xs[0], phis[0] = x, phi0
    phi = float(phi0)
    for k in range(n):
        verts = field.vertices(np.array([phi]), x[None, :])[0]
        rates = _omega_choices(omega, x[None, :])[0]
        v, w = _select(verts, rates, policy, rng)
        x = x + step * field.epsilon * v
        phi = phi + step * w
        _check_domain(x[None, :], domain, t0 + (k + 1) * step)
        xs[k + 1], phis[k + 1] = x, phi
    return Trajectory(t0 + step * np.arange(n + 1), xs, phis, seed)


def sample_phase_trajectory(field, x0, phi0=0.0, phi_end=TWO_PI, dphi=0.01, seed=0, policy="random", omega=None,
                            domain=None):
    """Phase-parameterized single trajectory of dx/dphi in k X(phi, x)."""
    check_positive(dphi, "dphi")
    x = as_vector(x0, field.dim).copy()
    domain = check_box(domain, field.dim)
    n, step = _n_steps(phi_end - phi0, dphi)
    rng = np.random.default_rng(seed)
    xs = np.empty((n + 1, field.dim))
    xs[0] = x
    for k in range(n):
        phi = phi0 + k * step
        verts = field.vertices(np.array([phi]), x[None, :])[0]
        rates = _omega_choices(omega, x[None, :])[0]
        v, w = _select(verts, rates, policy, rng)
        x = x + step * v / w
        _check_domain(x[None, :], domain, phi + step)
        xs[k + 1] = x
    params = phi0 + step * np.arange(n + 1)
    return Trajectory(params, xs, params.copy(), seed, "phase")


@dataclass
class RecurrentSequence:
    crossings: np.ndarray
    deltas: np.ndarray


def recurrent_times(traj, phi0=None, bounds=None, tol=1e-9):
    """Times at which the phase first reaches phi0 + 2 pi k, k = 1, 2, ...

    ``bounds=(m, M)`` enforces every return time in [2 pi / M, 2 pi / m].
    """
    t = np.asarray(traj.params, dtype=float)
    phi = np.asarray(traj.phi, dtype=float)
    if np.any(np.diff(phi) <= 0):
        raise ValueError("phase is not strictly increasing along the trajectory")
    phi0 = phi[0] if phi0 is None else float(phi0)
    n_cycles = int(math.floor((phi[-1] - phi0) / TWO_PI + 1e-12))
    if n_cycles < 1:
        raise ValueError("trajectory does not cover a full phase cycle")
    targets = phi0 + TWO_PI * np.arange(1, n_cycles + 1)
    crossings = np.interp(targets, phi, t)
    start = np.interp(phi0, phi, t) if phi0 >= phi[0] else t[0]
    deltas = np.diff(np.concatenate([[start], crossings]))
    if bounds is not None:
        m, M = bounds
        if np.any(deltas < TWO_PI / M - tol) or np.any(deltas > TWO_PI / m + tol):
            raise ValueError("return time outside [2 pi / M, 2 pi / m]")
    return RecurrentSequence(crossings, deltas)


def poincare_map(field, R0, phi0=0.0, dphi=0.01, h=0.01, omega=None, domain=None):
    """Image of R0 after one full phase cycle."""
    sol = propagate_phase(field, R0, phi0, phi0 + TWO_PI, dphi, h, omega=omega, domain=domain,
                          record_every=10**9)
    return sol.last


@dataclass
class PeriodicFunnelResult:
    fixed_point: CompactSet
    gaps: list
    converged: bool
    iterations: int
    reason: str = ""
    ratios: list = field(default_factory=list)

    def to_dict(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "gaps": list(map(float, self.gaps)),
            "ratios": list(map(float, self.ratios)),
            "fixed_point": self.fixed_point.to_dict(),
            "reason": self.reason,
        }


def periodic_funnel(field, R0, phi0=0.0, tol=1e-3, max_iter=20, dphi=0.01, h=0.001, omega=None, domain=None):
    """Iterate the one-cycle map until successive sets are within ``tol`` (tol >= 2h)."""
    if tol < 2 * h:
        raise ValueError("tol must be at least 2h; smaller gaps are below the pruning resolution")
    if int(max_iter) < 1:
        raise ValueError("max_iter must be >= 1")
    current = R0 if isinstance(R0, CompactSet) else CompactSet(as_points(R0, field.dim))
    gaps = []
    for it in range(1, int(max_iter) + 1):
        try:
            nxt = poincare_map(field, current, phi0, dphi, h, omega, domain)
        except DomainExitError as exc:
            return PeriodicFunnelResult(current, gaps, False, it - 1, f"domain exit: {exc}", _ratios(gaps))
        gap = hausdorff(nxt, current)
        gaps.append(gap)
        current = nxt
        if not np.isfinite(gap):
            return PeriodicFunnelResult(current, gaps, False, it, "iterates diverged", _ratios(gaps))
        if gap <= tol:
            return PeriodicFunnelResult(current, gaps, True, it, "", _ratios(gaps))
    return PeriodicFunnelResult(current, gaps, False, int(max_iter), "max_iter reached", _ratios(gaps))


def _ratios(gaps):
    return [b / a for a, b in zip(gaps[:-1], gaps[1:]) if a > 0]


def _graph_points(sol, scale):
    pts, times = [], []
    for s in sol.slices:
        pts.append(np.column_stack([np.full(len(s.set), scale * s.param), s.set.points]))
        times.append(np.full(len(s.set), s.param))
    return np.vstack(pts), np.concatenate(times)


def _window_distance(g1, t1, g2, t2, centers, eps_g):
    # t1 and t2 are non-decreasing, so every window is a contiguous block
    lo1 = np.searchsorted(t1, centers - eps_g - 1e-12, side="left")
    hi1 = np.searchsorted(t1, centers + eps_g + 1e-12, side="right")
    lo2 = np.searchsorted(t2, centers - eps_g - 1e-12, side="left")
    hi2 = np.searchsorted(t2, centers + eps_g + 1e-12, side="right")
    worst = 0.0
    for a0, a1, b0, b1 in zip(lo1, hi1, lo2, hi2):
        if a1 <= a0 or b1 <= b0:
            return math.inf
        d = cdist(g1[a0:a1], g2[b0:b1])
        worst = max(worst, d.min(axis=1).max(), d.min(axis=0).max())
    return float(worst)


def graph_distance(S1, S2, eps_g, translation_search=None, time_scale=1.0, exhaustive=False):
    """Windowed graph distance between two funnels, minimized over constant translations.

    For a translation T the graph of S2 is shifted to (t - T, x). Around each
    slice parameter c of S1 whose window fits inside both graphs, the graph
    points within c +- eps_g are compared in the Hausdorff metric with time
    weighted by ``time_scale``; D(T) is the largest of these. Returns
    ``(min_T D(T), argmin T)``. ``translation_search`` is None (T = 0) or a
    ``(lo, hi, step)`` grid.

    Long grids are searched coarse-to-fine: D is scanned on a thinned grid
    with thinned window centres, the neighbourhood of the best coarse shift
    is scanned at full resolution, and the best few candidates are scored
    with every centre. ``exhaustive=True`` scores every shift with every
    centre instead.
    """
    if S1.param_kind != S2.param_kind:
        raise ValueError("both funnels must share their parameter kind")
    if S1.dim != S2.dim:
        raise ValueError("dimension mismatch")
    eps_g = check_positive(eps_g, "eps_g")
    if eps_g < max(S1.step, S2.step) - 1e-12:
        raise ValueError("eps_g must be at least the slice spacing of both funnels")
    if translation_search is None or translation_search == "none":
        shifts = np.array([0.0])
    else:
        lo, hi, st = translation_search
        check_positive(st, "translation step")
        shifts = lo + st * np.arange(int(math.floor((hi - lo) / st + 1e-9)) + 1)
    g1, t1 = _graph_points(S1, time_scale)
    g2_raw, t2_raw = _graph_points(S2, time_scale)
    p1 = S1.params

    def score(T, stride):
        t2 = t2_raw - T
        g2 = g2_raw.copy()
        g2[:, 0] = time_scale * t2
        lo_c = max(t1.min(), t2.min()) + eps_g - 1e-12
        hi_c = min(t1.max(), t2.max()) - eps_g + 1e-12
        centers = p1[(p1 >= lo_c) & (p1 <= hi_c)]
        if centers.size == 0:
            return math.inf
        if stride > 1:
            centers = np.concatenate([centers[::stride], centers[-1:]])
        return _window_distance(g1, t1, g2, t2, centers, eps_g)

    if exhaustive or len(shifts) <= 64:
        values = np.array([score(T, 1) for T in shifts])
        i = int(np.argmin(values))
        return float(values[i]), float(shifts[i])
    stride = max(1, int(eps_g / S1.step))
    k = int(math.ceil(len(shifts) / 32))
    idx = np.unique(np.append(np.arange(0, len(shifts), k), len(shifts) - 1))
    while True:
        vals = np.array([score(shifts[i], stride) for i in idx])
        order = np.argsort(vals, kind="stable")
        if k == 1:
            break
        i0 = int(idx[order[0]])
        k_next = max(1, int(math.ceil(k / 8)))
        idx = np.arange(max(0, i0 - k), min(len(shifts), i0 + k + 1), k_next)
        k = k_next
    best, best_T = math.inf, float(shifts[idx[order[0]]])
    for i in idx[order[:3]]:
        d = score(shifts[i], 1)
        if d < best:
            best, best_T = d, float(shifts[i])
    return best, best_T


def trajectory_funnel(traj):
    """Wrap a single trajectory as a funnel of singleton slices."""
    slices = [CrossSection(float(p), CompactSet(x[None, :]), (float(f), float(f)))
              for p, x, f in zip(traj.params, traj.x, traj.phi)]
    step = float(np.min(np.diff(traj.params))) if len(traj) > 1 else 1.0
    return RfSolution(traj.param_kind, slices, step, 0.0, traj.selection_seed)


def max_slice_gap(S1, S2):
    """Largest Hausdorff distance between slices with equal parameters (index-matched)."""
    if len(S1) != len(S2) or not np.allclose(S1.params, S2.params, atol=1e-9):
        raise ValueError("funnels have different slice parameters")
    return max(hausdorff(a, b) for a, b in zip(S1.sets, S2.sets))


def contains_within(outer, inner, slack):
    """True when every point of ``inner`` lies within ``slack`` of ``outer`` (one slice)."""
    return directed_hausdorff(inner, outer) <= slack


__all__ = [
    "CrossSection",
    "DomainExitError",
    "PeriodicFunnelResult",
    "RecurrentSequence",
    "RfSolution",
    "Trajectory",
    "graph_distance",
    "max_slice_gap",
    "periodic_funnel",
    "poincare_map",
    "propagate_phase",
    "propagate_time",
    "recurrent_times",
    "sample_phase_trajectory",
    "sample_trajectory",
    "trajectory_funnel",
]
