"""Hybrid systems with set-valued flows, guard/reset jumps and funnel-based control.

A :class:`HybridSystem` flows along x' in f(x) + G(x) u between events and
jumps through a set-valued reset when the guard s(x) reaches zero from above.
The phase map supplies the clock used by funnels and controllers; for the
toy walker it is the leg angle.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, check_positive
from .funnels import Funnel
from .sets import default_grid

log = logging.getLogger(__name__)


class SingularDecouplingError(ValueError):
    """The decoupling matrix of the output is (numerically) singular."""

    def __init__(self, x, cond):
        super().__init__(f"decoupling matrix is singular at x={np.asarray(x).tolist()} (condition number {cond:.3g})")
        self.x = np.asarray(x)
        self.cond = cond


class UncontrollableDirectionError(ValueError):
    """The input cannot change V along the requested tangent direction."""


class HybridSystem:
    """Set-valued hybrid system.

    Parameters
    ----------
    drift : callable x (n,) -> (k, n) drift vertices.
    input_matrix : callable x -> (n, m) matrix, or (kg, n, m) vertex stack.
    guard : callable x -> float; jumps happen where it reaches 0 from above.
    reset : callable x -> (kr, n) reset vertices.
    phase : callable (t, x) -> float, increasing along flows. Defaults to t.
    phase_rate : callable x -> (lo, hi) interval for d phase / dt. Defaults to (1, 1).
    transverse : state indices that funnels and controllers act on; all by default.
    """

    def __init__(self, dim, n_inputs, drift, input_matrix, guard, reset, phase=None, phase_rate=None,
                 transverse=None, guard_scale=1.0, name="hybrid"):
        self.dim = int(dim)
        self.n_inputs = int(n_inputs)
        self._drift = drift
        self._input = input_matrix
        self.guard = guard
        self._reset = reset
        self._phase = phase
        self._phase_rate = phase_rate
        self.transverse = np.arange(self.dim) if transverse is None else np.asarray(transverse, dtype=int)
        self.guard_scale = check_positive(guard_scale, "guard_scale")
        self.name = name

    def drift_vertices(self, x):
        out = np.asarray(self._drift(np.asarray(x, dtype=float)), dtype=float).reshape(-1, self.dim)
        return out

    def input_vertices(self, x):
        g = np.asarray(self._input(np.asarray(x, dtype=float)), dtype=float)
        return g.reshape(-1, self.dim, self.n_inputs)

    def reset_vertices(self, x):
        return np.asarray(self._reset(np.asarray(x, dtype=float)), dtype=float).reshape(-1, self.dim)

    def phase(self, t, x):
        return float(t) if self._phase is None else float(self._phase(t, x))

    def phase_rate(self, x):
        if self._phase_rate is None:
            return 1.0, 1.0
        lo, hi = self._phase_rate(x)
        return float(lo), float(hi)

    def centroid_drift(self, x):
        return self.drift_vertices(x).mean(axis=0)

    def centroid_input(self, x):
        return self.input_vertices(x).mean(axis=0)


@dataclass
class HybridArc:
    """Samples (j, t, phi, x, u) per flow segment plus the jump events (t, x_minus, x_plus)."""

    dim: int
    n_inputs: int
    segments: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = "completed"
    reason: str = ""

    @property
    def n_jumps(self):
        return len(self.events)

    def rows(self):
        for j, samples in self.segments:
            for t, phi, x, u in samples:
                yield j, t, phi, x, u

    def states(self):
        return np.array([x for _, _, _, x, _ in self.rows()])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "t", "phi"] + [f"x{i + 1}" for i in range(self.dim)] +
                   [f"u{i + 1}" for i in range(self.n_inputs)])
        for j, t, phi, x, u in self.rows():
            w.writerow([j, repr(float(t)), repr(float(phi))] + [repr(float(v)) for v in np.concatenate([x, u])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _locate_event(sys, x, v, dt, s0, tol):
    """Bisection on the step fraction for s(x + sigma dt v) = 0, given s0 > 0 >= s(end)."""
    lo, hi = 0.0, 1.0
    xm = x + dt * v
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm = x + mid * dt * v
        sm = sys.guard(xm)
        if abs(sm) <= tol:
            return mid, xm
        if sm > 0:
            lo = mid
        else:
            hi = mid
    return hi, x + hi * dt * v


def simulate_hybrid(sys, controller, x0, t0=0.0, T=None, dt=1e-3, seed=0, max_jumps=None, zeno_limit=100):
    """Euler-integrate the hybrid system with seeded vertex and reset selections.

    ``controller`` is ``None`` (zero input) or a callable (t, phi, x) -> u.
    The run stops at ``t0 + T``, after ``max_jumps`` jumps, or when beating
    (a second crossing within one step) or more than ``zeno_limit`` jumps in
    one time unit are detected; ``status`` records which.
    """
    if T is None and max_jumps is None:
        raise ValueError("give a horizon T, a jump budget max_jumps, or both")
    dt = check_positive(dt, "dt")
    x = as_vector(x0, sys.dim).copy()
    tol = 1e-10 * sys.guard_scale
    if sys.guard(x) <= 0:
        raise ValueError("initial state must lie strictly on the flow side of the guard")
    rng = np.random.default_rng(seed)
    t = float(t0)
    t_end = math.inf if T is None else t0 + float(T)
    arc = HybridArc(sys.dim, sys.n_inputs)
    j = 0
    samples = []
    zero_u = np.zeros(sys.n_inputs)
    last_event = -math.inf
    recent = []
    max_steps = 10_000_000
    for _ in range(max_steps):
        u = zero_u if controller is None else np.atleast_1d(np.asarray(controller(t, sys.phase(t, x), x), float))
        samples.append((t, sys.phase(t, x), x.copy(), u.copy()))
        if t >= t_end - 1e-12 or (max_jumps is not None and j >= max_jumps):
            break
        step = min(dt, t_end - t)
        fv = sys.drift_vertices(x)
        gv = sys.input_vertices(x)
        v = fv[rng.integers(len(fv))] + gv[rng.integers(len(gv))] @ u
        s0 = sys.guard(x)
        x_new = x + step * v
        if sys.guard(x_new) > 0:
            x, t = x_new, t + step
            continue
        sigma, x_minus = _locate_event(sys, x, v, step, s0, tol)
        t_event = t + sigma * step
        samples.append((t_event, sys.phase(t_event, x_minus), x_minus.copy(), u.copy()))
        arc.segments.append((j, samples))
        verts = sys.reset_vertices(x_minus)
        x_plus = rng.dirichlet(np.ones(len(verts))) @ verts if len(verts) > 1 else verts[0].copy()
        arc.events.append((t_event, x_minus.copy(), x_plus.copy()))
        if t_event - last_event < dt:
            arc.status, arc.reason = "beating", f"two events within one step near t={t_event:.6g}"
            return arc
        recent = [e for e in recent if e > t_event - 1.0] + [t_event]
        if len(recent) > zeno_limit:
            arc.status, arc.reason = "zeno", f"more than {zeno_limit} jumps in one time unit near t={t_event:.6g}"
            return arc
        if sys.guard(x_plus) <= 0:
            arc.status, arc.reason = "beating", f"reset lands on the jump side of the guard at t={t_event:.6g}"
            return arc
        last_event = t_event
        j += 1
        x, t = x_plus, t_event
        samples = []
    arc.segments.append((j, samples))
    if max_jumps is not None and j >= max_jumps:
        arc.status = "max_jumps"
    return arc


def _jacobian(fn, x, step):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def feedback_linearizing_u(sys, x, output, Kp, Kd, kappa, fd_step=1e-4, max_cond=1e8, relative_degree=2):
    """Input zeroing the output of a virtual constraint.

    For relative degree two, u = (L_G L_f y)^-1 (-L_f^2 y - mu) with
    mu = Kp y / kappa^2 + Kd L_f y / kappa. For relative degree one,
    u = (L_G y)^-1 (-L_f y - Kp y / kappa). Lie derivatives use the centroid
    of the drift and input vertices and finite differences of ``output``.
    """
    x = as_vector(x, sys.dim)
    kappa = check_positive(kappa, "kappa")

    def y(z):
        return np.atleast_1d(np.asarray(output(z), dtype=float))

    def lf_y(z):
        return _jacobian(y, z, fd_step) @ sys.centroid_drift(z)

    if relative_degree == 1:
        jac = _jacobian(y, x, fd_step)
        decoupling = jac @ sys.centroid_input(x)
        cond = np.linalg.cond(decoupling)
        if not np.isfinite(cond) or cond > max_cond:
            raise SingularDecouplingError(x, cond)
        return np.linalg.solve(decoupling, -jac @ sys.centroid_drift(x) - Kp * y(x) / kappa)
    if relative_degree != 2:
        raise ValueError("relative_degree must be 1 or 2")
    jac_lf = _jacobian(lf_y, x, fd_step)
    lf2 = jac_lf @ sys.centroid_drift(x)
    decoupling = jac_lf @ sys.centroid_input(x)
    cond = np.linalg.cond(decoupling)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularDecouplingError(x, cond)
    mu = Kp * y(x) / kappa**2 + Kd * lf_y(x) / kappa
    return np.linalg.solve(decoupling, -lf2 - mu)


def _candidate_gradients(cand, xt, dx, step=1e-6):
    if cand.grad is not None:
        gx, gdx = cand.grad(xt, dx)
        return np.atleast_1d(gx).astype(float), np.atleast_1d(gdx).astype(float)
    z = np.concatenate([xt, dx])
    d = xt.size
    g = np.empty(z.size)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = step
        hi = cand.V((z + e)[None, :d], (z + e)[None, d:])[0]
        lo = cand.V((z - e)[None, :d], (z - e)[None, d:])[0]
        g[i] = (hi - lo) / (2 * step)
    return g[:d], g[d:]


def differential_u(cand, sys, x, dx, u, kappa_alpha, fd_step=1e-6, min_norm=1e-10):
    """Min-norm differential input for V' <= -kappa_alpha alpha(V) against the worst drift vertex.

    With phase-reduced dynamics (f + G u) / D, D the centroid of the phase
    rate, A = dV/dx (f + G u) / D + dV/d(dx) F dx and B = dV/d(dx) G / D,
    where F is the Jacobian of the reduced drift in the transverse
    coordinates. Returns -(A + kappa_alpha alpha(V)) B^T / (B B^T) for the
    largest A over the drift vertices.
    """
    x = as_vector(x, sys.dim)
    idx = sys.transverse
    dx = as_vector(dx, idx.size, "dx")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not np.any(dx):
        return np.zeros(sys.n_inputs)
    lo, hi = sys.phase_rate(x)
    D = 0.5 * (lo + hi)
    xt = x[idx]
    gx, gdx = _candidate_gradients(cand, xt, dx)
    G = sys.centroid_input(x)[idx] / D
    B = gdx @ G
    if np.linalg.norm(B) < min_norm:
        raise UncontrollableDirectionError(f"input has no effect on V along dx at x={x.tolist()}")
    n_vert = len(sys.drift_vertices(x))

    def reduced(z, k):
        full = x.copy()
        full[idx] = z
        lo_, hi_ = sys.phase_rate(full)
        f = sys.drift_vertices(full)[k] + sys.centroid_input(full) @ u
        return f[idx] / (0.5 * (lo_ + hi_))

    best = -math.inf
    for k in range(n_vert):
        flow = reduced(xt, k)
        jac = _jacobian(lambda z: reduced(z, k), xt, fd_step)
        best = max(best, float(gx @ flow + gdx @ (jac @ dx)))
    v = cand.value(xt, dx)
    rhs = best + kappa_alpha * float(cand.alpha(v))
    return -rhs * B / float(B @ B)


def path_integral_u(sys, cand, funnel, u_star, x, phi, n_seg=20, kappa_alpha=1.0):
    """Input u* at the funnel projection plus differential corrections integrated along the chord.

    x* is the point of the funnel slice at ``phi`` nearest to x (in the
    transverse coordinates). The chord x* + mu (x - x*) is marched with
    ``n_seg`` explicit Euler steps in mu, feeding the running input back
    into each differential step.
    """
    x = as_vector(x, sys.dim)
    idx = sys.transverse
    xt = x[idx]
    x_star_t = funnel.project(phi, xt)
    x_star = x.copy()
    x_star[idx] = x_star_t
    u = np.atleast_1d(np.asarray(u_star(x_star, phi), dtype=float))
    delta = xt - x_star_t
    if not np.any(delta):
        return u
    n_seg = int(n_seg)
    if n_seg < 1:
        raise ValueError("n_seg must be >= 1")
    for k in range(n_seg):
        point = x_star.copy()
        point[idx] = x_star_t + (k / n_seg) * delta
        u = u + differential_u(cand, sys, point, delta, u, kappa_alpha) / n_seg
    return u


def arc_phase_distance(arc_a, arc_b, transverse, n_phase=50):
    """Per-jump distance between two arcs, comparing states at equal (j, phi).

    Jump counters are matched first, then phases: within segment j both arcs
    are interpolated on a common phase grid and the largest transverse gap
    is recorded. Time is ignored, so runs that drift apart in time but share
    a phase pattern are close.
    """
    idx = np.asarray(transverse, dtype=int)
    out = []
    for (ja, sa), (jb, sb) in zip(arc_a.segments, arc_b.segments):
        if ja != jb or len(sa) < 2 or len(sb) < 2:
            break
        pa = np.array([s[1] for s in sa])
        pb = np.array([s[1] for s in sb])
        if np.any(np.diff(pa) <= 0) or np.any(np.diff(pb) <= 0):
            raise ValueError("phase must increase along each flow segment")
        lo, hi = max(pa[0], pb[0]), min(pa[-1], pb[-1])
        if hi <= lo:
            break
        grid = np.linspace(lo, hi, n_phase)
        xa = np.array([s[2][idx] for s in sa])
        xb = np.array([s[2][idx] for s in sb])
        gap = np.zeros(n_phase)
        for c in range(idx.size):
            gap = np.maximum(gap, np.abs(np.interp(grid, pa, xa[:, c]) - np.interp(grid, pb, xb[:, c])))
        out.append(float(gap.max()))
    return np.array(out)


def _inflate(points, radius, grid):
    pts = np.asarray(points, dtype=float)
    if radius <= 0:
        return pts
    return (pts[:, None, :] + radius * grid.dirs[None, :, :]).reshape(-1, pts.shape[1])


def funnel_jump_consistency(funnel, reset, eps_phi=None, eps_F=None, grid=None, n_phase=5, n_fill=64, seed=0):
    """Check that the reset maps the inflated end of the funnel into its start.

    The pre-jump set is the union of slices over phi_e +- eps_phi inflated by
    eps_phi + eps_F; it is sampled by its supporting points and random convex
    fills, pushed through every reset vertex and tested against the slices at
    phi_s +- eps_phi. Returns (ok, margin) where margin is the smallest
    signed distance of an image point to the target slice boundary.
    """
    eps_phi = funnel.eps_phi if eps_phi is None else float(eps_phi)
    eps_F = funnel.eps_F if eps_F is None else float(eps_F)
    grid = grid or default_grid(funnel.dim)
    rng = np.random.default_rng(seed)
    radius = eps_phi + eps_F
    pre = []
    for phi in np.linspace(funnel.phi_e - eps_phi, funnel.phi_e + eps_phi, n_phase):
        base = funnel.slice_at(phi).points
        pts = _inflate(base, radius, grid)
        if len(pts) > 1 and n_fill:
            w = rng.dirichlet(np.ones(len(pts)), n_fill)
            pts = np.vstack([pts, w @ pts])
        pre.append(pts)
    pre = np.vstack(pre)
    images = np.asarray(reset(pre), dtype=float).reshape(-1, funnel.dim)
    targets = np.linspace(funnel.phi_s - eps_phi, funnel.phi_s + eps_phi, n_phase)
    margin = math.inf
    for phi in targets:
        h = funnel.support(phi)
        margin = min(margin, float(np.min(h[None, :] - images @ funnel.grid.dirs.T)))
    return margin >= 0, margin


# ---------------------------------------------------------------- toy walker

@dataclass
class WalkerParams:
    a: float = 1.0
    uncertainty: float = 0.1
    theta_guard: float = 0.3
    restitution: float = 0.9
    reset_noise: float = 0.02
    omega_start: float = 0.9
    omega_end: float = 1.0
    width_start: float = 0.15
    width_end: float = 0.06
    gain: float = 5.0
    eps_phi: float = 0.01
    eps_F: float = 0.01


def walker_system(p=None):
    """Two-state compass-like walker: theta' = omega, omega' = a sin(theta) [1 -+ unc] + u.

    The guard fires at theta = theta_guard; the reset maps
    (theta, omega) -> (-theta, restitution omega + [-noise, noise]).
    The phase is theta, so funnels live in omega.
    """
    p = p or WalkerParams()

    def drift(x):
        th, om = x
        base = p.a * math.sin(th)
        return np.array([[om, base * (1 - p.uncertainty)], [om, base * (1 + p.uncertainty)]])

    def input_matrix(x):
        return np.array([[0.0], [1.0]])

    def guard(x):
        return p.theta_guard - x[0]

    def reset(x):
        th, om = x
        w = p.restitution * om
        return np.array([[-th, w - p.reset_noise], [-th, w + p.reset_noise]])

    def phase(t, x):
        return x[0]

    def rate(x):
        return x[1], x[1]

    return HybridSystem(2, 1, drift, input_matrix, guard, reset, phase, rate, transverse=[1],
                        guard_scale=p.theta_guard, name="walker")


def walker_funnel(p=None, n=61):
    """Tube in omega around a line from omega_start to omega_end over the phase, narrowing linearly."""
    p = p or WalkerParams()
    lo_phi, hi_phi = -p.theta_guard, p.theta_guard

    def center(phi):
        return p.omega_start + (p.omega_end - p.omega_start) * (phi - lo_phi) / (hi_phi - lo_phi)

    def width(phi):
        s = (phi - lo_phi) / (hi_phi - lo_phi)
        return p.width_start + (p.width_end - p.width_start) * s

    return Funnel.from_interval_functions(lambda f: center(f) - width(f), lambda f: center(f) + width(f), lo_phi,
                                          hi_phi, n, eps_phi=p.eps_phi, eps_F=p.eps_F)


def walker_nominal_input(p=None):
    """u*(x, phi): steers omega toward the funnel centre line in phase, cancelling the nominal drift."""
    p = p or WalkerParams()
    slope = (p.omega_end - p.omega_start) / (2 * p.theta_guard)
    lo_phi = -p.theta_guard

    def u_star(x, phi):
        th, om = x
        center = p.omega_start + slope * (phi - lo_phi)
        return np.array([om * slope - p.a * math.sin(th) - p.gain * (om - center)])

    return u_star


def walker_transverse_reset(p=None, factor=None):
    """Reset acting on omega alone; ``factor`` overrides the restitution (used for mutation checks)."""
    p = p or WalkerParams()
    r = p.restitution if factor is None else float(factor)

    def reset(w):
        w = np.asarray(w, dtype=float).reshape(-1, 1)
        return np.stack([r * w - p.reset_noise, r * w + p.reset_noise], axis=1)

    return reset


def walker_controller(kind="path_integral", p=None, cand=None, n_seg=10, kappa_alpha=1.0):
    """Controller callable (t, phi, x) -> u for the shipped walker."""
    from .contraction import FinslerCandidate

    p = p or WalkerParams()
    if kind == "open_loop":
        return None
    u_star = walker_nominal_input(p)
    if kind == "nominal":
        return lambda t, phi, x: u_star(x, phi)
    if kind == "path_integral":
        sys = walker_system(p)
        funnel = walker_funnel(p)
        cand = cand or FinslerCandidate.quadratic(dim=1, alpha=1.0)

        def ctrl(t, phi, x):
            return path_integral_u(sys, cand, funnel, u_star, x, phi, n_seg, kappa_alpha)

        return ctrl
    if kind == "feedback_linearizing":
        slope = (p.omega_end - p.omega_start) / (2 * p.theta_guard)
        sys = walker_system(p)

        def output(x):
            # omega tracks the centre line as a function of theta; omega is actuated, so degree one
            return np.array([x[1] - p.omega_start - slope * (x[0] + p.theta_guard)])

        def ctrl(t, phi, x):
            return feedback_linearizing_u(sys, x, output, p.gain, 0.0, 1.0, relative_degree=1)

        return ctrl
    raise ValueError(f"unknown controller {kind!r}; choose open_loop, nominal, path_integral, feedback_linearizing")


__all__ = [
    "HybridArc",
    "HybridSystem",
    "SingularDecouplingError",
    "UncontrollableDirectionError",
    "WalkerParams",
    "arc_phase_distance",
    "differential_u",
    "feedback_linearizing_u",
    "funnel_jump_consistency",
    "path_integral_u",
    "simulate_hybrid",
    "walker_controller",
    "walker_funnel",
    "walker_nominal_input",
    "walker_system",
    "walker_transverse_reset",
]
