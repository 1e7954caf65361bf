"""Set-valued vector fields X(phi, x), interval phase velocities and phase averaging.

Field values are convex sets encoded by their vertices. The batch evaluator
``vertices(phi, x)`` takes ``phi`` of shape (n,) and ``x`` of shape (n, dim)
and returns an (n, k, dim) array: k vertices per query point, with k fixed
for a given field.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._validation import as_points, as_vector, check_box, check_positive
from .sets import default_grid

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class VertexSample:
    """One value of a set-valued map, given by a finite vertex list."""

    vertices: np.ndarray
    convex: bool = True

    def __post_init__(self):
        object.__setattr__(self, "vertices", as_points(self.vertices, name="vertices"))


class SetValuedField:
    """Vertex-sampled set-valued field with its declared bound and Lipschitz constant.

    ``epsilon`` is the slow-time factor: time propagation moves states by
    ``dt * epsilon * v``. Phase-parameterized propagation ignores it.
    """

    def __init__(self, dim, vertices_fn, bound, lipschitz, epsilon=1.0, convex=True, name="field"):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        self._fn = vertices_fn
        self.bound = check_positive(bound, "bound")
        self.lipschitz = check_positive(lipschitz, "lipschitz", allow_zero=True)
        self.epsilon = check_positive(epsilon, "epsilon")
        self.convex = bool(convex)
        self.name = name

    def __repr__(self):
        return f"SetValuedField({self.name!r}, dim={self.dim}, M_X={self.bound:g}, lambda={self.lipschitz:g})"

    def vertices(self, phi, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (x.shape[0],):
            phi = np.broadcast_to(phi, (x.shape[0],))
        out = np.asarray(self._fn(phi, x), dtype=float)
        if out.ndim != 3 or out.shape[0] != x.shape[0] or out.shape[2] != self.dim:
            raise ValueError(f"{self.name}: vertex evaluator returned shape {out.shape}")
        return out

    def __call__(self, phi, x):
        x = as_vector(x, self.dim)
        return VertexSample(self.vertices(np.array([phi]), x[None, :])[0], self.convex)

    def with_epsilon(self, epsilon):
        return SetValuedField(self.dim, self._fn, self.bound, self.lipschitz, epsilon, self.convex, self.name)

    @classmethod
    def from_pointwise(cls, dim, fn, bound, lipschitz, **kw):
        """Wrap a per-point evaluator ``fn(phi, x) -> (k, dim)`` into a batch field."""

        def batch(phi, x):
            return np.stack([np.asarray(fn(p, xi), dtype=float).reshape(-1, dim) for p, xi in zip(phi, x)])

        return cls(dim, batch, bound, lipschitz, **kw)

    @classmethod
    def union(cls, *fields, name="union"):
        """Field whose vertex list concatenates those of ``fields`` (not convexified)."""
        dim = fields[0].dim

        def batch(phi, x):
            return np.concatenate([f.vertices(phi, x) for f in fields], axis=1)

        return cls(
            dim,
            batch,
            max(f.bound for f in fields),
            max(f.lipschitz for f in fields),
            fields[0].epsilon,
            convex=False,
            name=name,
        )


class PhaseVelocity:
    """Interval-valued angular velocity Omega(x) = [lo(x), hi(x)] within [m, M]."""

    def __init__(self, interval_fn, m, M, lipschitz=0.0):
        self._fn = interval_fn
        self.m = check_positive(m, "m")
        self.M = check_positive(M, "M")
        if self.M < self.m:
            raise ValueError("M must be >= m")
        self.lipschitz = check_positive(lipschitz, "lipschitz", allow_zero=True)
        self.constant_interval = None

    @classmethod
    def constant(cls, lo, hi=None):
        hi = lo if hi is None else hi
        lo_, hi_ = float(lo), float(hi)

        def fn(x):
            n = np.asarray(x).reshape(len(x), -1).shape[0]
            return np.full(n, lo_), np.full(n, hi_)

        out = cls(fn, lo_, hi_, 0.0)
        out.constant_interval = (lo_, hi_)
        return out

    def intervals(self, x, tol=1e-12):
        lo, hi = self._fn(np.asarray(x, dtype=float))
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if np.any(lo > hi) or np.any(lo < self.m - tol) or np.any(hi > self.M + tol):
            raise ValueError("phase velocity interval outside [m, M] or reversed")
        return lo, hi

    def __call__(self, x):
        lo, hi = self.intervals(np.atleast_2d(np.asarray(x, dtype=float)))
        return float(lo[0]), float(hi[0])

    @property
    def is_constant_rate(self):
        return self.m == self.M


@njit(cache=True)
def _averaged_support_points(verts, dirs):
    # verts: (n, P, k, d); returns (n, m, d) phase means of per-direction argmax vertices
    n, P, k, d = verts.shape
    m = dirs.shape[0]
    out = np.zeros((n, m, d))
    constant = True
    for i in range(n):
        for p in range(1, P):
            for q in range(k):
                for c in range(d):
                    if verts[i, p, q, c] != verts[i, 0, q, c]:
                        constant = False
                        break
                if not constant:
                    break
            if not constant:
                break
        if not constant:
            break
    if constant:
        return out, True
    for i in range(n):
        for j in range(m):
            for p in range(P):
                best = -np.inf
                arg = 0
                for q in range(k):
                    s = 0.0
                    for c in range(d):
                        s += verts[i, p, q, c] * dirs[j, c]
                    if s > best:
                        best = s
                        arg = q
                for c in range(d):
                    out[i, j, c] += verts[i, p, arg, c]
            for c in range(d):
                out[i, j, c] /= P
    return out, False


def _average_vertices(field, x, n_phi, dirs):
    # x: (n, d). Returns (n, m, d) averaged supporting points, or the raw
    # vertices when the field does not vary over the phase grid.
    n, d = x.shape
    phis = TWO_PI * np.arange(n_phi) / n_phi
    verts = field.vertices(np.tile(phis, n), np.repeat(x, n_phi, axis=0)).reshape(n, n_phi, -1, d)
    out, constant = _averaged_support_points(verts, dirs)
    return verts[:, 0] if constant else out


def average(field, x, n_phi=64, grid=None):
    """Phase average of a convex-valued field at one state.

    Each returned vertex is the phase average of the supporting points of
    X(phi_k, x) in one grid direction, so its projection on that direction is
    exactly the averaged support value.
    """
    if not field.convex:
        raise ValueError("averaging requires convex field values")
    if int(n_phi) < 8:
        raise ValueError("n_phi must be >= 8")
    grid = grid or default_grid(field.dim)
    x = as_vector(x, field.dim)
    out = _average_vertices(field, x[None, :], int(n_phi), grid.dirs)[0]
    return VertexSample(np.unique(out, axis=0), True)


def averaged_support(field, x, dirs, n_phi):
    """Phase-averaged support values at one state, shape (len(dirs),)."""
    x = as_vector(x, field.dim)
    dirs = np.asarray(dirs, dtype=float)
    phis = TWO_PI * np.arange(int(n_phi)) / int(n_phi)
    verts = field.vertices(phis, np.repeat(x[None, :], len(phis), axis=0))
    return (verts @ dirs.T).max(axis=1).mean(axis=0)


class AveragedField(SetValuedField):
    """Phase-independent field obtained by averaging ``source`` over one period."""

    def __init__(self, source, n_phi=64, grid=None):
        if not source.convex:
            raise ValueError("averaging requires convex field values")
        if int(n_phi) < 8:
            raise ValueError("n_phi must be >= 8")
        self.source = source
        self.n_phi = int(n_phi)
        self.grid = grid or default_grid(source.dim)

        def fn(phi, x):
            return _average_vertices(source, x, self.n_phi, self.grid.dirs)

        super().__init__(
            source.dim, fn, source.bound, source.lipschitz, source.epsilon, True, f"avg({source.name})"
        )

    def with_epsilon(self, epsilon):
        return AveragedField(self.source.with_epsilon(epsilon), self.n_phi, self.grid)


def averaging_bound_constant(m, M, M_X, lam, lam_omega, L):
    """Closeness constant c for the original and averaged funnels on [t0, t0 + L/eps].

    c = (exp(lam*M*L/m) - 1) * (4*pi*M_X/m + 2*pi*lam_omega*M_X**2/lam) + 8*pi*M_X/m.
    Returns ``inf`` when the exponential overflows.
    """
    for name, val in (("m", m), ("M", M), ("M_X", M_X), ("lambda", lam), ("lambda_omega", lam_omega), ("L", L)):
        check_positive(val, name)
    try:
        growth = math.expm1(lam * M * L / m)
    except OverflowError:
        return math.inf
    value = growth * (4 * math.pi * M_X / m + 2 * math.pi * lam_omega * M_X**2 / lam) + 8 * M_X * math.pi / m
    return value if math.isfinite(value) else math.inf


def value_distance(va, vb, dirs):
    """Hausdorff distance between conv(va) and conv(vb) via sampled support functions."""
    return float(np.abs((va @ dirs.T).max(axis=-2) - (vb @ dirs.T).max(axis=-2)).max())


def estimate_lipschitz(field, domain_box, n_samples=200, seed=0, grid=None):
    """Largest observed ratio d_H(X(phi, x1), X(phi, x2)) / |x1 - x2| over random pairs."""
    if int(n_samples) < 2:
        raise ValueError("n_samples must be >= 2")
    lo, hi = check_box(domain_box, field.dim)
    if np.any(hi - lo <= 0):
        raise ValueError("domain box has zero volume")
    rng = np.random.default_rng(seed)
    n = int(n_samples)
    x1 = lo + (hi - lo) * rng.random((n, field.dim))
    x2 = lo + (hi - lo) * rng.random((n, field.dim))
    phi = TWO_PI * rng.random(n)
    v1 = field.vertices(phi, x1)
    v2 = field.vertices(phi, x2)
    dirs = (grid or default_grid(field.dim)).dirs
    gaps = np.abs((v1 @ dirs.T).max(axis=1) - (v2 @ dirs.T).max(axis=1)).max(axis=1)
    dist = np.linalg.norm(x1 - x2, axis=1)
    ok = dist > 1e-12
    return float((gaps[ok] / dist[ok]).max()) if ok.any() else 0.0


def check_periodicity(field, xs, n_phi=16, tol=1e-9, grid=None):
    """Max support gap between X(phi, x) and X(phi + 2 pi, x) on sampled points."""
    xs = as_points(xs, field.dim)
    dirs = (grid or default_grid(field.dim)).dirs
    phis = np.tile(TWO_PI * np.arange(n_phi) / n_phi, xs.shape[0])
    xb = np.repeat(xs, n_phi, axis=0)
    gap = value_distance(field.vertices(phis, xb), field.vertices(phis + TWO_PI, xb), dirs)
    return gap, gap <= tol
