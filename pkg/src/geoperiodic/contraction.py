"""Finsler distances and contraction certificates for phase-parameterized inclusions.

Fields here are phase-parameterized: ``field.vertices(phi, x)`` gives the
vertices of dx/dphi. Finsler structures and Lyapunov candidates are batch
callables ``F(x, dx)`` with ``x``, ``dx`` of shape (n, dim) returning (n,).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_points, as_vector, check_box, check_positive
from .sets import CompactSet, default_grid, project_onto_hull

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS

INVALID_CANDIDATE = "invalid-candidate"
CONTRACTION_FAILED = "contraction-failed"
INVARIANCE_FAILED = "invariance-failed"


class FinslerStructure:
    """Batch Finsler norm F(x, dx) on tangent vectors."""

    def __init__(self, fn, name="F"):
        self._fn = fn
        self.name = name

    def __call__(self, x, dx):
        x = np.asarray(x, dtype=float)
        dx = np.asarray(dx, dtype=float)
        single = x.ndim == 1 and dx.ndim == 1
        x2, dx2 = np.atleast_2d(x), np.atleast_2d(dx)
        if x2.shape[0] == 1 and dx2.shape[0] > 1:
            x2 = np.repeat(x2, dx2.shape[0], axis=0)
        out = np.asarray(self._fn(x2, dx2), dtype=float)
        return float(out[0]) if single else out

    @classmethod
    def euclidean(cls):
        return cls(lambda x, dx: np.linalg.norm(dx, axis=1), "euclidean")

    @classmethod
    def riemannian(cls, metric):
        """sqrt(dx^T M(x) dx); ``metric`` is a constant SPD matrix or a batch callable x -> (n, d, d)."""
        if callable(metric):
            def fn(x, dx):
                m = metric(x)
                return np.sqrt(np.einsum("ni,nij,nj->n", dx, m, dx))
        else:
            mat = np.asarray(metric, dtype=float)
            if np.any(np.linalg.eigvalsh(mat) <= 0):
                raise ValueError("metric must be positive definite")

            def fn(x, dx):
                return np.sqrt(np.einsum("ni,ij,nj->n", dx, mat, dx))

        return cls(fn, "riemannian")

    @classmethod
    def randers(cls, beta, metric=None):
        """sqrt(dx^T M dx) + <beta(x), dx>, with |beta|_{M^-1} < 1 (constant or batch callable beta)."""
        if metric is None:
            base = cls.euclidean()
            minv = None
        else:
            base = cls.riemannian(metric)
            minv = np.linalg.inv(np.asarray(metric, dtype=float))
        if callable(beta):
            beta_fn = beta
        else:
            b = np.atleast_1d(np.asarray(beta, dtype=float))
            size = math.sqrt(b @ (minv if minv is not None else np.eye(b.size)) @ b)
            if size >= 1:
                raise ValueError("Randers drift must have dual norm below 1")

            def beta_fn(x):
                return np.broadcast_to(b, x.shape)

        def fn(x, dx):
            return base._fn(x, dx) + np.sum(beta_fn(x) * dx, axis=1)

        return cls(fn, "randers")


def check_homogeneity(F, x, dx, scales=(0.5, 2.0, 10.0)):
    """Largest |F(x, s dx) - s F(x, dx)| over the given scales."""
    x, dx = np.atleast_2d(x), np.atleast_2d(dx)
    base = F(x, dx)
    return max(float(np.abs(F(x, s * dx) - s * base).max()) for s in scales)


def _path_length(F, pts):
    # pts: (n_seg + 1, d) waypoints
    a, b = pts[:-1], pts[1:]
    seg = b - a
    xs = (a[:, None, :] + _GL_NODES[None, :, None] * seg[:, None, :]).reshape(-1, pts.shape[1])
    dxs = np.repeat(seg, len(_GL_NODES), axis=0)
    vals = F(xs, dxs).reshape(len(seg), len(_GL_NODES))
    return float((vals * _GL_WEIGHTS).sum())


def _descend(F, pts, best, n_iters, rng, floor):
    """Coordinate descent on the interior waypoints, halving the step when a sweep stalls."""
    n_seg, dim = pts.shape[0] - 1, pts.shape[1]
    coords = [(i, j) for i in range(1, n_seg) for j in range(dim)]
    step = 0.25 * max(np.linalg.norm(pts[-1] - pts[0]), 1e-12) / n_seg
    for _ in range(int(n_iters)):
        improved = False
        for idx in rng.permutation(len(coords)):
            i, j = coords[idx]
            for sign in (1.0, -1.0):
                old = pts[i, j]
                pts[i, j] = old + sign * step
                val = _path_length(F, pts)
                if val < best - 1e-15:
                    best = val
                    improved = True
                    break
                pts[i, j] = old
        if not improved:
            step *= 0.5
            if step < floor:
                break
    return pts, best


def finsler_distance(F, x0, x1, n_seg=1, n_opt_iters=100, seed=0, tol=1e-10):
    """Length of the best piecewise-linear path from x0 to x1 found by coordinate descent.

    The search starts from the straight chord with two segments and doubles
    the segment count up to ``n_seg``, each level starting from the previous
    path. Coarse levels move long stretches of the path at once, which lets
    it leave the chord when a detour is shorter; single waypoint moves on a
    fine path cannot. On the two-segment level the midpoint is also started
    at fixed offsets of 1/4 and 1/2 chord length along every coordinate axis,
    so a detour on either side of a slow region is tried.

    The result is the length of an actual path, so it bounds the Finsler
    distance from above; it is a local optimum and can miss a shorter path
    around strongly varying regions. ``seed`` fixes the sweep order.
    """
    x0 = as_vector(x0, name="x0")
    x1 = as_vector(x1, x0.size, "x1")
    if int(n_seg) < 1:
        raise ValueError("n_seg must be >= 1")
    n_seg = int(n_seg)
    chord = x0 + np.linspace(0.0, 1.0, n_seg + 1)[:, None] * (x1 - x0)
    best = _path_length(F, chord)
    if not math.isfinite(best):
        raise ValueError("Finsler structure is not finite along the chord")
    if n_seg == 1 or np.allclose(x0, x1):
        return best
    rng = np.random.default_rng(seed)
    floor = tol * max(1.0, np.linalg.norm(x1 - x0))
    levels = [2]
    while levels[-1] * 2 < n_seg:
        levels.append(levels[-1] * 2)
    if levels[-1] != n_seg:
        levels.append(n_seg)
    mid = 0.5 * (x0 + x1)
    length = np.linalg.norm(x1 - x0)
    starts = [mid] + [mid + sign * frac * length * e for e in np.eye(x0.size) for frac in (0.25, 0.5)
                      for sign in (1.0, -1.0)]
    best_start, best_len = None, math.inf
    for m in starts:
        trial = np.vstack([x0, m, x1])
        val = _path_length(F, trial)
        if not math.isfinite(val):
            continue
        trial, val = _descend(F, trial, val, n_opt_iters, rng, floor)
        if val < best_len - 1e-15:
            best_start, best_len = trial, val
    pts = best_start
    for n in levels[1:]:
        if len(pts) != n + 1:
            # resample the current path at n + 1 points evenly spaced in the parameter
            s_old = np.linspace(0.0, 1.0, len(pts))
            s_new = np.linspace(0.0, 1.0, n + 1)
            pts = np.column_stack([np.interp(s_new, s_old, pts[:, j]) for j in range(pts.shape[1])])
        pts, _ = _descend(F, pts, _path_length(F, pts), n_opt_iters, rng, floor)
    return min(best, _path_length(F, pts))


def _chord_lengths(F, a, b):
    """Straight-chord lengths from every row of a to every row of b, shape (len(a), len(b))."""
    na, nb, d = a.shape[0], b.shape[0], a.shape[1]
    seg = (b[None, :, :] - a[:, None, :]).reshape(-1, d)
    start = np.repeat(a, nb, axis=0)
    total = np.zeros(na * nb)
    for s, w in zip(_GL_NODES, _GL_WEIGHTS):
        total += w * F(start + s * seg, seg)
    return total.reshape(na, nb)


def pairwise_finsler(F, a, b, n_seg=1, **kw):
    a, b = as_points(a), as_points(b, np.asarray(a).shape[-1])
    if n_seg == 1:
        return _chord_lengths(F, a, b)
    return np.array([[finsler_distance(F, p, q, n_seg, **kw) for q in b] for p in a])


def finsler_hausdorff(F, R0, R1, n_seg=1, return_directed=False, **kw):
    """max of sup_{a in R0} inf_{b in R1} d_F(a, b) and sup_{b in R1} inf_{a in R0} d_F(b, a)."""
    a = R0.points if isinstance(R0, CompactSet) else as_points(R0)
    b = R1.points if isinstance(R1, CompactSet) else as_points(R1, a.shape[1])
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    fwd = float(pairwise_finsler(F, a, b, n_seg, **kw).min(axis=1).max())
    bwd = float(pairwise_finsler(F, b, a, n_seg, **kw).min(axis=1).max())
    out = max(fwd, bwd)
    return (out, fwd, bwd) if return_directed else out


class Alpha:
    """Decay function alpha in sup L V <= -alpha(V): zero, linear or class K."""

    def __init__(self, kind, fn, rate=None):
        self.kind = kind
        self._fn = fn
        self.rate = rate

    def __call__(self, v):
        return self._fn(np.asarray(v, dtype=float))

    @classmethod
    def zero(cls):
        return cls("zero", lambda v: np.zeros_like(v))

    @classmethod
    def linear(cls, lam):
        lam = check_positive(lam, "lambda")
        return cls("linear", lambda v: lam * v, lam)

    @classmethod
    def class_k(cls, fn, grid=None):
        grid = np.logspace(-6, 6, 121) if grid is None else np.asarray(grid, dtype=float)
        if abs(float(fn(np.array(0.0)))) > 1e-12:
            raise ValueError("class K function must vanish at 0")
        vals = np.array([float(fn(g)) for g in grid])
        if np.any(np.diff(vals) <= 0) or vals[0] <= 0:
            raise ValueError("class K function must be positive and strictly increasing")
        return cls("classK", lambda v: np.vectorize(fn, otypes=[float])(v))

    @classmethod
    def from_spec(cls, spec):
        if spec is None or spec == "zero":
            return cls.zero()
        if isinstance(spec, Alpha):
            return spec
        if isinstance(spec, (int, float)):
            return cls.linear(spec)
        if isinstance(spec, dict):
            if spec.get("kind") == "linear":
                return cls.linear(spec["lambda"])
            if spec.get("kind") == "zero":
                return cls.zero()
        raise ValueError(f"cannot build alpha from {spec!r}")


class FinslerCandidate:
    """Lyapunov candidate V on the tangent bundle with c1 F^p <= V <= c2 F^p.

    ``grad`` optionally returns the exact gradients (dV/dx, dV/d dx) for a
    single point; otherwise central differences are used.
    """

    def __init__(self, V, F, p, c1, c2, alpha=None, grad=None):
        self.V = V
        self.F = F
        if p < 1:
            raise ValueError("p must be >= 1")
        self.p = float(p)
        self.c1 = check_positive(c1, "c1")
        self.c2 = check_positive(c2, "c2")
        if self.c2 < self.c1:
            raise ValueError("c2 must be >= c1")
        self.alpha = Alpha.from_spec(alpha)
        self.grad = grad

    def value(self, x, dx):
        return float(self.V(np.atleast_2d(x), np.atleast_2d(dx))[0])

    def sandwich_gap(self, x, dx):
        """Positive when the bounds c1 F^p <= V <= c2 F^p are violated (batch)."""
        v = self.V(x, dx)
        fp = self.F(x, dx) ** self.p
        scale = 1e-9 * (1.0 + np.abs(v))
        return np.maximum(self.c1 * fp - v - scale, v - self.c2 * fp - scale)

    @classmethod
    def quadratic(cls, P=None, dim=1, alpha=None):
        """V = dx^T P dx with the Euclidean structure; p = 2, c1/c2 = extreme eigenvalues."""
        P = np.eye(dim) if P is None else np.asarray(P, dtype=float)
        eig = np.linalg.eigvalsh(P)
        if eig[0] <= 0:
            raise ValueError("P must be positive definite")

        def V(x, dx):
            return np.einsum("ni,ij,nj->n", dx, P, dx)

        def grad(x, dx):
            return np.zeros_like(dx), 2.0 * P @ dx

        return cls(V, FinslerStructure.euclidean(), 2, eig[0], eig[-1], alpha, grad)


class AmbiguousMatchError(ValueError):
    """Vertex matching between nearby field values is not well defined."""


def _fd_gradient(fun, z, step):
    d = z.size
    eye = np.eye(d) * step
    pts = np.vstack([z[None, :], z + eye, z - eye])
    vals = fun(pts)
    f0, fp, fm = vals[0], vals[1 : d + 1], vals[d + 1 :]
    central = (fp - fm) / (2 * step)
    asym = np.abs((fp - f0) / step - (f0 - fm) / step)
    return central, asym


def _clarke_gradients(cand, x, dx, step):
    """Gradient set of V at (x, dx): one gradient when smooth, sampled gradients near kinks."""
    d = x.size
    if cand.grad is not None:
        gx, gdx = cand.grad(x, dx)
        return np.concatenate([np.atleast_1d(gx), np.atleast_1d(gdx)])[None, :], False

    def fun(z):
        return cand.V(z[:, :d], z[:, d:])

    z = np.concatenate([x, dx])
    g, asym = _fd_gradient(fun, z, step)
    if np.all(asym <= math.sqrt(step) * (1.0 + np.abs(g).max())):
        return g[None, :], False
    radius = 10.0 * step
    grads = [g]
    for i in range(z.size):
        for sign in (1.0, -1.0):
            zz = z.copy()
            zz[i] += sign * radius
            grads.append(_fd_gradient(fun, zz, step)[0])
    return np.array(grads), True


def _dedupe(verts, tol=1e-12):
    order = np.lexsort(verts.T[::-1])
    v = verts[order]
    out = [v[0]]
    for row in v[1:]:
        if np.linalg.norm(row - out[-1]) > tol:
            out.append(row)
    return np.array(out)


def _match(target, cands):
    dist = np.linalg.norm(cands - target, axis=1)
    order = np.argsort(dist, kind="stable")
    nearest = dist[order[0]]
    if len(order) > 1 and nearest > 0 and dist[order[1]] <= 2.0 * nearest:
        raise AmbiguousMatchError("vertex match is ambiguous within the finite-difference step")
    return cands[order[0]]


def variational_vertices(field, phi, x, dx, fd_step):
    """Pairs (v, J v . dx) for every vertex v of X(phi, x) by matched finite differences."""
    base = _dedupe(field.vertices(np.array([phi]), x[None, :])[0])
    plus = _dedupe(field.vertices(np.array([phi]), (x + fd_step * dx)[None, :])[0])
    minus = _dedupe(field.vertices(np.array([phi]), (x - fd_step * dx)[None, :])[0])
    if not (len(base) == len(plus) == len(minus)):
        raise AmbiguousMatchError("number of distinct vertices changes within the finite-difference step")
    jd = np.array([(_match(v, plus) - _match(v, minus)) / (2 * fd_step) for v in base])
    return base, jd


def lie_derivative_values(cand, field, x, dx, fd_step=1e-5, phi=0.0):
    """Per-vertex upper values max over the gradient set of <(v, J v . dx), grad V>."""
    x = as_vector(x, field.dim)
    dx = as_vector(dx, field.dim, "dx")
    fd_step = check_positive(fd_step, "fd_step")
    grads, _ = _clarke_gradients(cand, x, dx, fd_step)
    verts, jd = variational_vertices(field, phi, x, dx, fd_step)
    d = field.dim
    vals = verts @ grads[:, :d].T + jd @ grads[:, d:].T  # (k, n_grad)
    return vals.max(axis=1)


def lie_derivative_sup(cand, field, x, dx, fd_step=1e-5, phi=0.0, mode="sup"):
    """Largest (``mode='sup'``) or smallest (``'inf'``) element of the set-valued Lie derivative.

    Near kinks of V the gradient set is an outer estimate of the generalized
    gradient, and every vertex value is taken at its worst gradient, so both
    modes err on the conservative side.
    """
    vals = lie_derivative_values(cand, field, x, dx, fd_step, phi)
    if mode == "sup":
        return float(vals.max())
    if mode == "inf":
        return float(vals.min())
    raise ValueError("mode must be 'sup' or 'inf'")


@dataclass
class CertificateReport:
    passed: bool
    worst_margin: float
    witness: dict
    samples_used: int
    excluded_samples: int = 0
    reason: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def status(self):
        if self.passed:
            return "pass"
        return INVALID_CANDIDATE if self.reason == INVALID_CANDIDATE else "fail"

    def to_dict(self):
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {k: plain(u) for k, u in v.items()}
            return v

        return {
            "passed": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "witness": plain(self.witness),
            "samples_used": int(self.samples_used),
            "excluded_samples": int(self.excluded_samples),
            "reason": self.reason,
            "extras": plain(self.extras),
        }


def _sample_states(sampler, rng, n, dim):
    if callable(sampler):
        return as_points(sampler(rng, n), dim)
    lo, hi = check_box(sampler, dim)
    return lo + (hi - lo) * rng.random((n, dim))


def sample_unit_sphere(F, x, rng):
    """Tangent vectors with F(x, dx) = 1, one per row of x."""
    u = rng.standard_normal(x.shape)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u / F(x, u)[:, None]


def certify_contraction(cand, field, sampler, n_samples=1000, seed=0, slack=1e-8, mode="sup", fd_step=1e-5,
                        phi_range=(0.0, TWO_PI)):
    """Check sup L V + alpha(V) <= slack on random tangent samples.

    Base points come from ``sampler`` (a (lo, hi) box or ``f(rng, n)``),
    phases uniformly from ``phi_range`` and tangent vectors from the unit
    F-sphere. A violated sandwich bound makes the candidate invalid, which is
    reported separately from a failed contraction check.
    """
    rng = np.random.default_rng(seed)
    n = int(n_samples)
    xs = _sample_states(sampler, rng, n, field.dim)
    dxs = sample_unit_sphere(cand.F, xs, rng)
    phis = phi_range[0] + (phi_range[1] - phi_range[0]) * rng.random(n)
    gaps = cand.sandwich_gap(xs, dxs)
    if np.any(gaps > 0):
        i = int(np.argmax(gaps))
        return CertificateReport(False, math.inf, {"x": xs[i], "dx": dxs[i], "phi": phis[i]}, n, 0,
                                 INVALID_CANDIDATE, {"sandwich_violation": float(gaps[i])})
    vs = cand.V(xs, dxs)
    alphas = cand.alpha(vs)
    worst, witness, excluded = -math.inf, {}, 0
    for i in range(n):
        try:
            vals = lie_derivative_values(cand, field, xs[i], dxs[i], fd_step, phis[i])
        except AmbiguousMatchError:
            excluded += 1
            continue
        j = int(np.argmax(vals)) if mode == "sup" else int(np.argmin(vals))
        margin = float(vals[j] + alphas[i])
        if margin > worst:
            verts = _dedupe(field.vertices(np.array([phis[i]]), xs[i][None, :])[0])
            worst = margin
            witness = {"x": xs[i], "dx": dxs[i], "phi": float(phis[i]), "v": verts[j], "V": float(vs[i])}
    used = n - excluded
    if used == 0:
        return CertificateReport(False, math.nan, {}, 0, excluded, "all samples excluded")
    passed = worst <= slack
    return CertificateReport(passed, worst, witness, used, excluded, "" if passed else CONTRACTION_FAILED,
                             {"mode": mode, "alpha": cand.alpha.kind})


def _hull_boundary_distance(points, x):
    """Signed distance of x to the boundary of conv(points): positive inside."""
    pts = as_points(points, x.size)
    if x.size == 1:
        lo, hi = pts[:, 0].min(), pts[:, 0].max()
        return float(min(x[0] - lo, hi - x[0]))
    _, d_out = project_onto_hull(pts, x)
    if d_out > 0:
        return -d_out
    from scipy.spatial import ConvexHull

    try:
        eq = ConvexHull(pts).equations
    except Exception:
        return 0.0
    return float(np.min(-(eq[:, :-1] @ x + eq[:, -1])))


def contingent_cone_test(S, x, v, h_list=(1e-1, 1e-2, 1e-3, 1e-4), tol=1e-2, return_details=False):
    """Whether v lies in the contingent cone of conv(S) at x.

    Computes d(x + h v, conv S) / h along the decreasing ``h_list`` and
    accepts when the last ratio is at most ``tol`` and not larger than the
    one before it by more than tol/10. Points deeper than twice the
    resolution inside S give True with a note, since the cone is everything.
    """
    pts = S.points if isinstance(S, CompactSet) else as_points(S)
    res = S.resolution if isinstance(S, CompactSet) else 0.0
    x = as_vector(x, pts.shape[1])
    v = as_vector(v, pts.shape[1], "v")
    hs = np.asarray(h_list, dtype=float)
    if np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValueError("h_list must be positive and strictly decreasing")
    depth = _hull_boundary_distance(pts, x)
    slack = 2 * res + 1e-9
    if depth > slack:
        details = {"ratios": [], "note": "point is interior; the cone is the whole space"}
        log.debug("contingent cone test at interior point %s", x)
        return (True, details) if return_details else True
    if depth < -slack:
        raise ValueError("point is not on the boundary of the set")
    ratios = np.array([project_onto_hull(pts, x + h * v)[1] / h for h in hs])
    ok = ratios[-1] <= tol and (len(ratios) < 2 or ratios[-1] <= ratios[-2] + tol / 10)
    details = {"ratios": ratios.tolist(), "note": ""}
    return (bool(ok), details) if return_details else bool(ok)


def certify_funnel(cand, field, funnel, n_samples=500, seed=0, sampler=None, slack=1e-8, fd_step=1e-5,
                   h_list=(1e-1, 1e-2, 1e-3, 1e-4), tol=1e-2, n_boundary_phases=64):
    """Two-part funnel certificate: contraction outside the funnel and invariance on its boundary.

    (a) sup L V + alpha(V) <= slack at tangent samples whose base point lies
    outside the slice at its phase. (b) for boundary points of sampled slices
    and every field vertex v, the direction (1, v) must enter the graph of
    the funnel: d(x + h v, conv F(phi + h)) / h must vanish as h shrinks.
    """
    if not funnel.periodic:
        raise ValueError("funnel must be periodic in phase (span 2 pi, matching end slices)")
    rng = np.random.default_rng(seed)
    dim = field.dim
    if sampler is None:
        hmax = np.abs(funnel._h).max() * 3 + 1.0
        sampler = (np.full(dim, -hmax), np.full(dim, hmax))
    # (a) contraction outside the funnel
    worst, witness, used, excluded = -math.inf, {}, 0, 0
    draws = 0
    while used + excluded < n_samples and draws < 50 * n_samples:
        batch = max(n_samples - used - excluded, 16)
        xs = _sample_states(sampler, rng, batch, dim)
        phis = funnel.phi_s + TWO_PI * rng.random(batch)
        dxs = sample_unit_sphere(cand.F, xs, rng)
        draws += batch
        if np.any(cand.sandwich_gap(xs, dxs) > 0):
            return CertificateReport(False, math.inf, {}, used, excluded, INVALID_CANDIDATE)
        for x, dx, phi in zip(xs, dxs, phis):
            if used + excluded >= n_samples:
                break
            if funnel.contains(phi, x):
                continue
            try:
                val = lie_derivative_sup(cand, field, x, dx, fd_step, phi)
            except AmbiguousMatchError:
                excluded += 1
                continue
            margin = val + float(cand.alpha(cand.value(x, dx)))
            used += 1
            if margin > worst:
                worst, witness = margin, {"x": x, "dx": dx, "phi": float(phi)}
    # (b) invariance on the boundary
    total, good, bad_witness = 0, 0, None
    for phi in funnel.phi_s + TWO_PI * np.arange(n_boundary_phases) / n_boundary_phases:
        for xb in funnel.boundary_samples(phi):
            verts = field.vertices(np.array([phi]), xb[None, :])[0]
            for v in verts:
                ratios = np.array([funnel.distance(phi + h, xb + h * v) / h for h in h_list])
                ok = ratios[-1] <= tol and (len(ratios) < 2 or ratios[-1] <= ratios[-2] + tol / 10)
                total += 1
                if ok:
                    good += 1
                elif bad_witness is None:
                    bad_witness = {"phi": float(phi), "x": xb, "v": v, "ratios": ratios}
    fraction = good / total if total else 0.0
    contraction_ok = used == 0 or worst <= slack
    passed = contraction_ok and fraction == 1.0
    reason = "" if passed else (CONTRACTION_FAILED if not contraction_ok else INVARIANCE_FAILED)
    extras = {
        "contraction_margin": worst if used else None,
        "invariance_fraction": fraction,
        "boundary_checks": total,
        "invariance_witness": bad_witness,
    }
    return CertificateReport(passed, worst if used else -math.inf, witness, used, excluded, reason, extras)


@dataclass
class DecayReport:
    exponents: list
    min_exponent: float
    claimed_exponent: float
    k_estimate: float
    consistent: bool
    excluded_pairs: int
    note: str = ""

    def to_dict(self):
        return {
            "exponents": [float(e) for e in self.exponents],
            "min_exponent": float(self.min_exponent),
            "claimed_exponent": None if self.claimed_exponent is None else float(self.claimed_exponent),
            "k_estimate": float(self.k_estimate),
            "consistent": bool(self.consistent),
            "excluded_pairs": int(self.excluded_pairs),
            "note": self.note,
        }


def verify_incremental_decay(field, x_pairs, phi_span=TWO_PI, dphi=1e-3, seed=0, lam_claim=None, p=1.0,
                             k_claim=None, phi0=0.0, omega=None, tol=0.1):
    """Fit the exponential decay rate of distances between paired trajectories.

    Both trajectories of a pair use the same selection seed. A V-decay rate
    ``lam_claim`` with V ~ F^p predicts a distance rate of lam_claim / p; the
    report is consistent when every fitted exponent reaches that rate minus
    ``tol`` (and, with ``k_claim``, the overshoot stays below it).
    """
    from .reach import sample_phase_trajectory

    claimed = None if lam_claim is None else lam_claim / p
    exps, ks, excluded = [], [], 0
    for a, b in x_pairs:
        a = as_vector(a, field.dim)
        b = as_vector(b, field.dim)
        d0 = np.linalg.norm(a - b)
        if d0 == 0:
            excluded += 1
            continue
        ta = sample_phase_trajectory(field, a, phi0, phi0 + phi_span, dphi, seed, omega=omega)
        tb = sample_phase_trajectory(field, b, phi0, phi0 + phi_span, dphi, seed, omega=omega)
        dist = np.linalg.norm(ta.x - tb.x, axis=1)
        ok = dist > 1e-12
        if not ok.all():
            ok[np.argmin(ok):] = False  # truncate after underflow
        phis = ta.params[ok] - phi0
        slope = np.polyfit(phis, np.log(dist[ok]), 1)[0]
        exps.append(-slope)
        rate = claimed if claimed is not None else -slope
        ks.append(float(np.max(dist[ok] / (d0 * np.exp(-rate * phis)))))
    if not exps:
        raise ValueError("no pair with distinct points")
    min_exp = float(min(exps))
    consistent = claimed is None or min_exp >= claimed - tol
    if k_claim is not None:
        consistent = consistent and max(ks) <= k_claim
    note = "distance rate = V rate / p" if claimed is not None else ""
    return DecayReport(exps, min_exp, claimed, float(max(ks)), bool(consistent), excluded, note)


def graph_finsler(F):
    """Structure sqrt(dphi^2 + F(x, dx)^2) on (phi, x) graph coordinates."""

    def fn(z, dz):
        return np.sqrt(dz[:, 0] ** 2 + F(z[:, 1:], dz[:, 1:]) ** 2)

    return FinslerStructure(fn, f"graph({F.name})")


def graph_incremental_distance(S1, S2, F, eps_g, phi=None, n_seg=1):
    """Finsler-Hausdorff distance between the eps_g-windowed graphs of two phase funnels.

    With ``phi`` the window is centred there; otherwise the largest value
    over all centres of S1 whose windows fit in both funnels is returned.
    """
    if S1.param_kind != "phase" or S2.param_kind != "phase":
        raise ValueError("graph incremental distance compares phase-parameterized funnels")
    eps_g = check_positive(eps_g, "eps_g")
    G = graph_finsler(F)

    def graph(sol):
        pts = [np.column_stack([np.full(len(s.set), s.param), s.set.points]) for s in sol.slices]
        return np.vstack(pts)

    g1, g2 = graph(S1), graph(S2)
    lo = max(g1[:, 0].min(), g2[:, 0].min())
    hi = min(g1[:, 0].max(), g2[:, 0].max())
    if phi is None:
        centers = S1.params[(S1.params >= lo + eps_g - 1e-12) & (S1.params <= hi - eps_g + 1e-12)]
    else:
        centers = np.array([float(phi)])
    if centers.size == 0:
        raise ValueError("no phase window fits inside both funnels")
    worst = 0.0
    for c in centers:
        a = g1[np.abs(g1[:, 0] - c) <= eps_g + 1e-12]
        b = g2[np.abs(g2[:, 0] - c) <= eps_g + 1e-12]
        if len(a) == 0 or len(b) == 0:
            raise ValueError(f"empty graph window at phase {c:.6g}")
        worst = max(worst, finsler_hausdorff(G, a, b, n_seg))
    return worst


__all__ = [
    "Alpha",
    "AmbiguousMatchError",
    "CertificateReport",
    "DecayReport",
    "FinslerCandidate",
    "FinslerStructure",
    "certify_contraction",
    "certify_funnel",
    "check_homogeneity",
    "contingent_cone_test",
    "finsler_distance",
    "finsler_hausdorff",
    "graph_incremental_distance",
    "lie_derivative_sup",
    "lie_derivative_values",
    "sample_unit_sphere",
    "verify_incremental_decay",
]
