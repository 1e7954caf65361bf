"""Point-cloud compact sets: Hausdorff metric, support functions, pruning, hulls.

A compact set is stored as a finite cloud of points together with the
resolution ``h`` of the epsilon-net it was pruned to (0 for exact finite sets).
All operations are pure and deterministic: clouds are put in a canonical
lexicographic order before any greedy selection.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, types
from numba.typed import Dict
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import cdist
from scipy.spatial import cKDTree

from ._validation import as_points, as_vector, check_positive

UNIT_NORM_TOL = 1e-9
_CDIST_LIMIT = 4_000_000
_BRUTE_NET_LIMIT = 512
_SUPPORT_MERGE = 1e-6


@dataclass(frozen=True, eq=False)
class CompactSet:
    """Finite point-cloud stand-in for a nonempty compact subset of R^n."""

    points: np.ndarray
    resolution: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = as_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "resolution", check_positive(self.resolution, "resolution", allow_zero=True))

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"CompactSet(dim={self.dim}, n={len(self)}, resolution={self.resolution:g})"

    @classmethod
    def point(cls, x):
        return cls(as_vector(x).reshape(1, -1))

    @classmethod
    def interval(cls, lo, hi, h=None):
        """Closed interval in R^1, sampled at spacing <= h (endpoints always included)."""
        if hi < lo:
            raise ValueError("interval upper end below lower end")
        if h is None or hi == lo:
            pts = np.array([lo, hi], dtype=float) if hi > lo else np.array([lo], dtype=float)
            return cls(pts.reshape(-1, 1))
        n = max(int(math.ceil((hi - lo) / h)), 1)
        return cls(np.linspace(lo, hi, n + 1).reshape(-1, 1), resolution=(hi - lo) / n)

    @classmethod
    def box(cls, lo, hi, h):
        """Axis-aligned box sampled on a regular grid of spacing <= h."""
        lo = as_vector(lo)
        hi = as_vector(hi, lo.size)
        axes = []
        for a, b in zip(lo, hi):
            n = max(int(math.ceil((b - a) / h)), 1) if b > a else 0
            axes.append(np.linspace(a, b, n + 1))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(pts, resolution=h)

    @classmethod
    def circle(cls, center, radius, n):
        c = as_vector(center, 2)
        ang = 2 * np.pi * np.arange(n) / n
        return cls(c + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))

    def to_dict(self):
        return {"dim": self.dim, "resolution": self.resolution, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data):
        pts = as_points(data["points"], int(data["dim"]))
        return cls(pts, resolution=float(data.get("resolution", 0.0)))

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.dim)])
            writer.writerows(self.points.tolist())

    @classmethod
    def from_csv(cls, path, resolution=0.0):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or not all(name.startswith("x") for name in header):
            raise ValueError(f"{path}: expected header x1..xn, got {header}")
        return cls(np.array(body, dtype=float).reshape(-1, len(header)), resolution=resolution)


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Symmetric set of unit directions used to sample support functions."""

    dirs: np.ndarray

    def __post_init__(self):
        d = as_points(self.dirs, name="dirs")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("direction grid entries must have unit norm")
        d.setflags(write=False)
        object.__setattr__(self, "dirs", d)

    @property
    def dim(self):
        return self.dirs.shape[1]

    @property
    def count(self):
        return self.dirs.shape[0]

    def is_symmetric(self, tol=1e-12):
        tree = cKDTree(self.dirs)
        dist, _ = tree.query(-self.dirs)
        return bool(np.all(dist <= tol))


def _dedupe_directions(d):
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    d = np.round(d, 14) + 0.0
    _, idx = np.unique(d, axis=0, return_index=True)
    out = d[np.sort(idx)]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def default_grid(dim, count=None):
    """Axis directions plus a uniform angular grid (32 in R^2, 128 in R^3).

    ``count`` overrides the angular part. The grid is always symmetric.
    """
    dim = int(dim)
    if dim < 1:
        raise ValueError("dim must be positive")
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    if dim == 1:
        return DirectionGrid(np.array([[1.0], [-1.0]]))
    if dim == 2:
        n = 32 if count is None else int(count)
        n += n % 2
        ang = 2 * np.pi * np.arange(n) / n
        extra = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif dim == 3:
        half = (128 if count is None else int(count)) // 2
        # Fibonacci lattice on the upper hemisphere, mirrored for symmetry
        k = np.arange(half) + 0.5
        z = k / half
        r = np.sqrt(1 - z * z)
        theta = np.pi * (1 + 5**0.5) * k
        upper = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
        extra = np.vstack([upper, -upper])
    else:
        half = (16 * dim if count is None else int(count)) // 2
        g = np.random.default_rng(12345).standard_normal((half, dim))
        extra = np.vstack([g, -g])
    return DirectionGrid(_dedupe_directions(np.vstack([axes, extra])))


def _directed(a, b):
    if a.shape[0] * b.shape[0] <= _CDIST_LIMIT:
        return cdist(a, b).min(axis=1).max()
    dist, _ = cKDTree(b).query(a)
    return dist.max()


def directed_hausdorff(A, B):
    """sup over a in A of the distance from a to B."""
    a, b = _cloud(A), _cloud(B)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(_directed(a, b))


def hausdorff(A, B):
    """Hausdorff distance between two stored point clouds (exact on the clouds)."""
    a, b = _cloud(A), _cloud(B)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] * b.shape[0] <= _CDIST_LIMIT:
        d = cdist(a, b)
        return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    return float(max(_directed(a, b), _directed(b, a)))


def _cloud(A):
    return A.points if isinstance(A, CompactSet) else as_points(A)


def support(A, d):
    """Support function max_{a in A} <a, d> for a unit direction d."""
    pts = _cloud(A)
    d = as_vector(d, pts.shape[1], "direction")
    if abs(np.linalg.norm(d) - 1.0) > UNIT_NORM_TOL:
        raise ValueError("support direction must have unit norm")
    return float((pts @ d).max())


def support_many(points, dirs):
    """Support values of one cloud over many directions, shape (m,)."""
    return (np.asarray(points) @ np.asarray(dirs).T).max(axis=0)


def extreme_indices(points, dirs):
    """Indices of points attaining the support value in at least one direction."""
    return np.unique(np.argmax(points @ dirs.T, axis=0))


def lexsort_rows(points):
    return np.lexsort(points.T[::-1])


@njit(cache=True)
def _net_brute(points, h, n_fixed):
    n, d = points.shape
    keep = np.empty(n, np.int64)
    nk = 0
    h2 = h * h
    for i in range(n):
        ok = True
        if i < n_fixed:
            keep[nk] = i
            nk += 1
            continue
        for k in range(nk):
            j = keep[k]
            s = 0.0
            for c in range(d):
                diff = points[i, c] - points[j, c]
                s += diff * diff
            if s < h2:
                ok = False
                break
        if ok:
            keep[nk] = i
            nk += 1
    return keep[:nk]


@njit(cache=True)
def _cell_key(cell):
    key = np.int64(1469598103934665603)
    for c in range(cell.shape[0]):
        key = (key ^ cell[c]) * np.int64(1099511628211)
    return key


@njit(cache=True)
def _net_grid(points, h, n_fixed):
    # spatial hash of kept points; key collisions only cost extra distance checks
    n, d = points.shape
    cells = np.floor(points / h).astype(np.int64)
    heads = Dict.empty(key_type=types.int64, value_type=types.int64)
    nxt = np.full(n, -1, np.int64)
    keep = np.empty(n, np.int64)
    nk = 0
    h2 = h * h
    n_off = 3**d
    probe = np.empty(d, np.int64)
    for i in range(n):
        ok = True
        for o in range(n_off if i >= n_fixed else 0):
            rem = o
            for c in range(d):
                probe[c] = cells[i, c] + (rem % 3) - 1
                rem //= 3
            key = _cell_key(probe)
            if key in heads:
                j = heads[key]
                while j >= 0:
                    s = 0.0
                    for c in range(d):
                        diff = points[i, c] - points[j, c]
                        s += diff * diff
                    if s < h2:
                        ok = False
                        break
                    j = nxt[j]
            if not ok:
                break
        if ok:
            keep[nk] = i
            nk += 1
            key = _cell_key(cells[i])
            if key in heads:
                nxt[i] = heads[key]
            heads[key] = i
    return keep[:nk]


def net_indices(points, h, order=None, n_fixed=0):
    """Greedy epsilon-net: walk ``order`` and keep points at distance >= h from all kept ones.

    The first ``n_fixed`` points of the walk are kept unconditionally.
    """
    pts = np.ascontiguousarray(points if order is None else points[order], dtype=float)
    if pts.shape[0] <= _BRUTE_NET_LIMIT or pts.shape[1] > 6:
        kept = _net_brute(pts, float(h), int(n_fixed))
    else:
        kept = _net_grid(pts, float(h), int(n_fixed))
    return kept if order is None else np.asarray(order)[kept]


@njit(cache=True)
def _local_extremes(points, dirs, radius):
    n, d = points.shape
    m = dirs.shape[0]
    scores = points @ dirs.T
    cells = np.floor(points / radius).astype(np.int64)
    heads = Dict.empty(key_type=types.int64, value_type=types.int64)
    nxt = np.full(n, -1, np.int64)
    for i in range(n):
        key = _cell_key(cells[i])
        if key in heads:
            nxt[i] = heads[key]
        heads[key] = i
    r2 = radius * radius
    probe = np.empty(d, np.int64)
    beaten = np.zeros((n, m), np.bool_)
    for i in range(n):
        for o in range(3**d):
            rem = o
            for c in range(d):
                probe[c] = cells[i, c] + (rem % 3) - 1
                rem //= 3
            key = _cell_key(probe)
            if key not in heads:
                continue
            j = heads[key]
            while j >= 0:
                if j != i:
                    s = 0.0
                    for c in range(d):
                        diff = points[i, c] - points[j, c]
                        s += diff * diff
                    if s <= r2:
                        for k in range(m):
                            if scores[j, k] > scores[i, k]:
                                beaten[i, k] = True
                j = nxt[j]
    out = np.zeros(n, np.bool_)
    for i in range(n):
        for k in range(m):
            if not beaten[i, k]:
                out[i] = True
                break
    return out


@njit(cache=True)
def _prune_sorted(pts, h, dirs, exempt, merge, local_radius):
    # pts: lexicographically sorted, no duplicates. Returns sorted kept indices.
    # local_radius > 0 also treats local extremes as support points.
    n, d = pts.shape
    m = dirs.shape[0]
    is_ext = np.zeros(n, np.bool_)
    for j in range(m):
        best = -np.inf
        arg = 0
        for i in range(n):
            s = 0.0
            for c in range(d):
                s += pts[i, c] * dirs[j, c]
            if s > best:
                best = s
                arg = i
        is_ext[arg] = True
    if local_radius > 0:
        if d == 1:
            # sorted line: a point is a local extreme when a neighbour gap exceeds the radius
            for i in range(n - 1):
                if pts[i + 1, 0] - pts[i, 0] > local_radius:
                    is_ext[i] = True
                    is_ext[i + 1] = True
        else:
            is_ext |= _local_extremes(pts, dirs, local_radius)
    ext = np.flatnonzero(is_ext)
    inner = np.flatnonzero(~is_ext)
    if exempt:
        ext = ext[_net_brute(pts[ext], merge * h, 0)]
        kept_inner = inner[_net_brute(pts[inner], h, 0)] if inner.size <= 512 else inner[_net_grid(pts[inner], h, 0)]
        kept = np.concatenate((ext, kept_inner))
    else:
        walk = np.concatenate((ext, inner))
        sub = pts[walk]
        kept = walk[_net_brute(sub, h, 0)] if n <= 512 else walk[_net_grid(sub, h, 0)]
    return np.sort(kept)


def local_extreme_mask(points, dirs, radius):
    """Points that no neighbour within ``radius`` exceeds along some direction of ``dirs``."""
    points = np.ascontiguousarray(points, dtype=float)
    if points.shape[1] == 1:
        # on the line the only directions are +-1: compare with the sorted neighbours
        order = np.argsort(points[:, 0], kind="stable")
        x = points[order, 0]
        gap = np.diff(x)
        top = np.append(gap > radius, True)
        bottom = np.insert(gap > radius, 0, True)
        mask = np.empty(len(x), bool)
        mask[order] = top | bottom
        return mask
    return _local_extremes(points, np.ascontiguousarray(dirs, dtype=float), float(radius))


def prune_points(points, h, dirs=None, exempt_support=False, local_radius=None):
    """Prune a raw cloud to an h-net, visiting support points first.

    Support points in the directions of ``dirs`` are visited before the rest,
    then the remaining points in lexicographic order; a point is kept when it
    is at distance >= h from every point kept so far.

    With ``exempt_support`` the support points are always kept (merged only
    when closer than 1e-6 h) and the other points are netted among
    themselves. Set propagation uses this mode: support values survive
    exactly even when the per-step motion is far below h, and points born
    next to the boundary are not swallowed by it, so the interior keeps
    filling in as the set grows.

    ``local_radius`` widens "support point" to local extremes: points that
    no neighbour within that radius exceeds along some grid direction. This
    keeps the edges of separate components and of holes from being clipped
    back by up to h every step. Output is lexicographically sorted.
    """
    if points.shape[1] == 1:
        pts = np.sort(points[:, 0])
        if pts.shape[0] > 1:
            pts = pts[np.concatenate(([True], pts[1:] != pts[:-1]))]
        pts = pts[:, None]
    else:
        pts = points[lexsort_rows(points)]
        if pts.shape[0] > 1:
            dup = np.all(pts[1:] == pts[:-1], axis=1)
            if dup.any():
                pts = pts[np.concatenate([[True], ~dup])]
    if pts.shape[0] == 1:
        return pts
    if dirs is None:
        dirs = default_grid(pts.shape[1]).dirs
    radius = 0.0 if local_radius is None else float(local_radius)
    if not radius >= 0:
        raise ValueError("local_radius must be >= 0")
    kept = _prune_sorted(np.ascontiguousarray(pts), float(h), np.ascontiguousarray(dirs, dtype=float),
                         bool(exempt_support), _SUPPORT_MERGE, radius)
    return pts[kept]


def prune(A, h, grid=None):
    """Greedy h-net of A (subset of A; dropped points lie within h of kept ones)."""
    h = check_positive(h, "h")
    pts = _cloud(A)
    dirs = None if grid is None else grid.dirs
    out = prune_points(pts, h, dirs)
    res = max(h, A.resolution) if isinstance(A, CompactSet) else h
    return CompactSet(out, resolution=res)


def minkowski_ball(A, r, grid=None):
    """Outer sample of A + r*B: every point shifted along every grid direction, plus A."""
    r = check_positive(r, "r", allow_zero=True)
    if r == 0:
        return A
    grid = grid or default_grid(A.dim)
    if grid.dim != A.dim:
        raise ValueError("grid dimension does not match the set")
    shifted = (A.points[:, None, :] + r * grid.dirs[None, :, :]).reshape(-1, A.dim)
    pts = np.vstack([A.points, shifted])
    if A.resolution > 0:
        return CompactSet(prune_points(pts, A.resolution, grid.dirs), resolution=A.resolution)
    order = lexsort_rows(pts)
    pts = np.unique(pts[order], axis=0)
    return CompactSet(pts)


def _affine_frame(pts, tol=1e-10):
    center = pts.mean(axis=0)
    centered = pts - center
    if pts.shape[0] == 1:
        return center, np.zeros((0, pts.shape[1]))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(s[0], 1.0) if s.size else 1.0
    rank = int(np.sum(s > tol * scale))
    return center, vt[:rank]


def hull_indices(points):
    """Indices of the extreme points of conv(points), exact for affine dimension <= 3."""
    pts = as_points(points)
    center, basis = _affine_frame(pts)
    rank = basis.shape[0]
    if rank == 0:
        return np.array([0])
    coords = (pts - center) @ basis.T
    if rank == 1:
        c = coords[:, 0]
        return np.unique([int(np.argmin(c)), int(np.argmax(c))])
    if rank > 3:
        raise ValueError("exact hull only available for affine dimension <= 3")
    try:
        return np.sort(ConvexHull(coords).vertices)
    except QhullError:
        return np.sort(ConvexHull(coords, qhull_options="QJ").vertices)


def convex_hull(A, grid=None):
    """Extreme points of conv(A); exact up to R^3, support points of a direction grid beyond."""
    pts = A.points
    center, basis = _affine_frame(pts)
    if basis.shape[0] <= 3:
        idx = hull_indices(pts)
        exact = True
    else:
        grid = grid or default_grid(A.dim)
        idx = extreme_indices(pts, grid.dirs)
        exact = False
    out = pts[idx]
    out = out[lexsort_rows(out)]
    return CompactSet(out, resolution=A.resolution, meta={"hull_exact": exact})


def _point_segment_dist(p, a, b):
    ab = b - a
    denom = ab @ ab
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    q = a + t * ab
    return float(np.linalg.norm(p - q)), q


def project_onto_hull(points, y):
    """Nearest point of conv(points) to y and its distance."""
    pts = as_points(points)
    y = as_vector(y, pts.shape[1])
    if pts.shape[1] == 1:
        lo, hi = pts[:, 0].min(), pts[:, 0].max()
        q = np.array([min(max(y[0], lo), hi)])
        return q, float(abs(y[0] - q[0]))
    center, basis = _affine_frame(pts)
    if basis.shape[0] == pts.shape[1] == 2:
        hull = ConvexHull(pts)
        if np.all(hull.equations[:, :2] @ y + hull.equations[:, 2] <= 1e-12):
            return y.copy(), 0.0
        verts = pts[hull.vertices]
        best = (math.inf, None)
        for i in range(len(verts)):
            d, q = _point_segment_dist(y, verts[i], verts[(i + 1) % len(verts)])
            if d < best[0]:
                best = (d, q)
        return best[1], best[0]
    if basis.shape[0] == pts.shape[1]:
        hull = ConvexHull(pts)
        if np.all(hull.equations[:, :-1] @ y + hull.equations[:, -1] <= 1e-12):
            return y.copy(), 0.0
        pts = pts[hull.vertices]
    # least squares over the simplex; the weight row enforces sum(lambda) = 1
    scale = 1.0 + np.abs(pts).max() + np.abs(y).max()
    w = 1e4 * scale
    mat = np.vstack([pts.T, w * np.ones(pts.shape[0])])
    rhs = np.concatenate([y, [w]])
    lam, _ = nnls(mat, rhs, maxiter=50 * pts.shape[0])
    lam = lam / lam.sum()
    q = lam @ pts
    return q, float(np.linalg.norm(y - q))


def distance_to_hull(points, y):
    return project_onto_hull(points, y)[1]


def union(*sets, h=None):
    pts = np.vstack([s.points for s in sets])
    res = max(s.resolution for s in sets)
    if h is not None:
        return CompactSet(prune_points(pts, h), resolution=max(h, res))
    return CompactSet(np.unique(pts, axis=0), resolution=res)
