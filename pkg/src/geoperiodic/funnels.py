"""Phase-indexed convex target tubes.

A funnel stores convex slices at increasing phases. Between stored phases the
slice is the Minkowski interpolation of its neighbours, computed through
support functions on a direction grid.
"""

import json

import numpy as np

from ._validation import as_vector
from .sets import CompactSet, default_grid, project_onto_hull

TWO_PI = 2.0 * np.pi


class Funnel:
    """Convex slices F(phi) for phi in [phi_s, phi_e] with optional jump tolerances."""

    def __init__(self, slices, eps_phi=0.0, eps_F=0.0, grid=None, periodic=None, phase_range=None):
        if len(slices) < 2:
            raise ValueError("a funnel needs at least two slices")
        items = sorted(((float(p), s if isinstance(s, CompactSet) else CompactSet(s)) for p, s in slices),
                       key=lambda item: item[0])
        phis = np.array([p for p, _ in items])
        if np.any(np.diff(phis) <= 0):
            raise ValueError("funnel phases must be distinct")
        self.phis = phis
        self.sets = [s for _, s in items]
        dim = self.sets[0].dim
        if any(s.dim != dim for s in self.sets):
            raise ValueError("all funnel slices must share one dimension")
        self.dim = dim
        self.eps_phi = float(eps_phi)
        self.eps_F = float(eps_F)
        self.grid = grid or default_grid(dim)
        dirs = self.grid.dirs
        # support values and supporting points of every stored slice on the grid
        self._h = np.array([(s.points @ dirs.T).max(axis=0) for s in self.sets])
        self._arg = np.array([s.points[np.argmax(s.points @ dirs.T, axis=0)] for s in self.sets])
        # nominal phase range; stored slices may extend past it by eps_phi
        if phase_range is None:
            phase_range = (phis[0], phis[-1])
        lo, hi = float(phase_range[0]), float(phase_range[1])
        if not (phis[0] - 1e-12 <= lo < hi <= phis[-1] + 1e-12):
            raise ValueError("phase_range must lie inside the stored slice phases")
        self._range = (lo, hi)
        self.periodic = self.is_periodic() if periodic is None else bool(periodic)

    @property
    def phi_s(self):
        return self._range[0]

    @property
    def phi_e(self):
        return self._range[1]

    @property
    def coverage(self):
        """Phase interval spanned by the stored slices."""
        return float(self.phis[0]), float(self.phis[-1])

    def is_periodic(self, tol=1e-9):
        if abs(self.phi_e - self.phi_s - TWO_PI) > 1e-9:
            return False
        ends = []
        for phi in (self.phi_s, self.phi_e):
            i = min(int(np.searchsorted(self.phis, phi, side="right")) - 1, len(self.phis) - 2)
            th = (phi - self.phis[i]) / (self.phis[i + 1] - self.phis[i])
            ends.append((1 - th) * self._h[i] + th * self._h[i + 1])
        return bool(np.abs(ends[0] - ends[1]).max() <= tol)

    def _locate(self, phi):
        phi = float(phi)
        lo, hi = self.coverage
        if self.periodic:
            phi = self.phi_s + (phi - self.phi_s) % TWO_PI
        elif phi < lo - 1e-12 or phi > hi + 1e-12:
            raise ValueError(f"phase {phi:.6g} outside the funnel range [{lo:.6g}, {hi:.6g}]")
        phi = min(max(phi, lo), hi)
        i = int(np.searchsorted(self.phis, phi, side="right")) - 1
        i = min(max(i, 0), len(self.phis) - 2)
        theta = (phi - self.phis[i]) / (self.phis[i + 1] - self.phis[i])
        return i, theta

    def support(self, phi):
        """Support values of the slice at ``phi`` over the funnel's grid."""
        i, th = self._locate(phi)
        return (1 - th) * self._h[i] + th * self._h[i + 1]

    def slice_at(self, phi):
        """Supporting points of the interpolated slice (its convex hull is the slice)."""
        i, th = self._locate(phi)
        pts = (1 - th) * self._arg[i] + th * self._arg[i + 1]
        return CompactSet(np.unique(pts, axis=0))

    def margin(self, phi, x):
        """min over grid directions of h(d) - <x, d>: positive inside, negative outside."""
        x = as_vector(x, self.dim)
        return float(np.min(self.support(phi) - self.grid.dirs @ x))

    def contains(self, phi, x, tol=0.0):
        return self.margin(phi, x) >= -tol

    def project(self, phi, x):
        """Nearest point of the slice at ``phi`` to ``x`` (``x`` itself when inside)."""
        x = as_vector(x, self.dim)
        if self.margin(phi, x) >= 0:
            return x.copy()
        q, _ = project_onto_hull(self.slice_at(phi).points, x)
        return q

    def distance(self, phi, x):
        x = as_vector(x, self.dim)
        if self.margin(phi, x) >= 0:
            return 0.0
        return project_onto_hull(self.slice_at(phi).points, x)[1]

    def boundary_samples(self, phi):
        """Boundary points of the slice: its supporting points on the grid."""
        return self.slice_at(phi).points

    def to_dict(self):
        return {
            "eps_phi": self.eps_phi,
            "eps_F": self.eps_F,
            "phase_range": list(self._range),
            "slices": [{"phi": float(p), "points": s.points.tolist()} for p, s in zip(self.phis, self.sets)],
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"eps_phi", "eps_F", "slices", "phase_range"}
        if unknown:
            raise ValueError(f"unknown funnel keys: {sorted(unknown)}")
        slices = [(s["phi"], CompactSet(np.asarray(s["points"], dtype=float))) for s in data["slices"]]
        return cls(slices, data.get("eps_phi", 0.0), data.get("eps_F", 0.0), phase_range=data.get("phase_range"))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def constant_interval(cls, lo, hi, phi_s=0.0, phi_e=TWO_PI, n=9, eps_phi=0.0, **kw):
        """Funnel whose every slice is [lo, hi], stored over [phi_s - eps_phi, phi_e + eps_phi]."""
        return cls.from_interval_functions(lambda p: lo, lambda p: hi, phi_s, phi_e, n, eps_phi=eps_phi, **kw)

    @classmethod
    def from_interval_functions(cls, lo_fn, hi_fn, phi_s, phi_e, n=61, eps_phi=0.0, **kw):
        """Scalar funnel with slices [lo_fn(phi), hi_fn(phi)], extended by eps_phi on both sides."""
        phis = np.linspace(phi_s, phi_e, n)
        if eps_phi > 0:
            phis = np.concatenate([[phi_s - eps_phi], phis, [phi_e + eps_phi]])
        slices = [(p, CompactSet([[lo_fn(p)], [hi_fn(p)]])) for p in phis]
        return cls(slices, eps_phi=eps_phi, phase_range=(phi_s, phi_e), **kw)

    def __repr__(self):
        return (f"Funnel(dim={self.dim}, phi=[{self.phi_s:.4g}, {self.phi_e:.4g}], slices={len(self.sets)}, "
                f"periodic={self.periodic})")


def funnel_from_rf(solution, eps_phi=0.0, eps_F=0.0):
    """Funnel whose slices are the convex hulls of a phase-parameterized Rf-solution."""
    if solution.param_kind != "phase":
        raise ValueError("funnels are indexed by phase")
    return Funnel([(s.param, s.set) for s in solution.slices], eps_phi, eps_F)

