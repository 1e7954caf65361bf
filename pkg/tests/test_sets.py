import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from geoperiodic.sets import (
    CompactSet,
    DirectionGrid,
    convex_hull,
    default_grid,
    directed_hausdorff,
    hausdorff,
    local_extreme_mask,
    minkowski_ball,
    project_onto_hull,
    prune,
    prune_points,
    support,
    union,
)

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def clouds(dim=2, max_size=12):
    return st.lists(st.lists(coords, min_size=dim, max_size=dim), min_size=1, max_size=max_size).map(
        lambda rows: CompactSet(np.array(rows, dtype=float))
    )


def brute_hausdorff(A, B):
    d = np.array([[np.linalg.norm(a - b) for b in B.points] for a in A.points])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def test_hausdorff_identity_is_zero():
    A = CompactSet(np.random.default_rng(1).normal(size=(30, 2)))
    assert hausdorff(A, A) == 0.0


def test_hausdorff_point_against_pair():
    assert hausdorff(CompactSet([[0.0]]), CompactSet([[3.0], [5.0]])) == 5.0


def test_hausdorff_sampled_intervals():
    A = CompactSet.interval(0.0, 1.0, 0.01)
    B = CompactSet.interval(2.0, 4.0, 0.01)
    assert hausdorff(A, B) == pytest.approx(3.0, abs=0.01)


def test_hausdorff_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        hausdorff(CompactSet([[0.0]]), CompactSet([[0.0, 1.0]]))


def test_hausdorff_large_clouds_match_brute_force():
    rng = np.random.default_rng(5)
    A = CompactSet(rng.normal(size=(2500, 2)))
    B = CompactSet(rng.normal(size=(2000, 2)) + 0.3)
    d = cdist(A.points, B.points)
    assert hausdorff(A, B) == pytest.approx(max(d.min(axis=1).max(), d.min(axis=0).max()), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(clouds(), clouds(), clouds())
def test_hausdorff_is_a_metric(A, B, C):
    ab, ba = hausdorff(A, B), hausdorff(B, A)
    assert ab == ba
    assert ab == pytest.approx(brute_hausdorff(A, B), abs=1e-9)
    assert hausdorff(A, C) <= ab + hausdorff(B, C) + 1e-12


def test_directed_hausdorff_is_one_sided():
    A, B = CompactSet([[0.0]]), CompactSet([[0.0], [4.0]])
    assert directed_hausdorff(A, B) == 0.0
    assert directed_hausdorff(B, A) == 4.0


def test_minkowski_ball_zero_radius_is_identity():
    A = CompactSet([[0.0, 1.0], [2.0, 3.0]])
    assert minkowski_ball(A, 0.0) is A


def test_minkowski_ball_of_origin_in_one_dimension():
    out = minkowski_ball(CompactSet([[0.0]]), 1.0, DirectionGrid([[1.0], [-1.0]]))
    assert sorted(out.points[:, 0]) == [-1.0, 0.0, 1.0]


@pytest.mark.parametrize("r", [0.05, 0.3, 1.0, 2.5])
def test_minkowski_ball_moves_by_radius(r):
    A = CompactSet(np.random.default_rng(2).normal(size=(20, 2)))
    assert hausdorff(minkowski_ball(A, r), A) == pytest.approx(r, abs=1e-12)


def test_support_examples():
    zero = CompactSet([[0.0, 0.0]])
    for d in default_grid(2).dirs:
        assert support(zero, d) == 0.0
    square = CompactSet([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert support(square, [1.0, 0.0]) == 1.0


def test_support_matches_scan():
    rng = np.random.default_rng(3)
    A = CompactSet(rng.normal(size=(50, 3)))
    for _ in range(20):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        assert support(A, d) == pytest.approx(max(float(p @ d) for p in A.points), rel=1e-14)


def test_support_rejects_non_unit_direction():
    with pytest.raises(ValueError):
        support(CompactSet([[0.0, 0.0]]), [1.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(clouds(max_size=10), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_support_sublinear_on_hull(A, a, b):
    d1 = np.array([np.cos(a), np.sin(a)])
    d2 = np.array([np.cos(b), np.sin(b)])
    s = d1 + d2
    if np.linalg.norm(s) < 1e-6:
        return
    n = np.linalg.norm(s)
    # the argmax of d1 + d2 is a point of conv(A), so its value is bounded by the two supports
    assert support(A, s / n) * n <= support(A, d1) + support(A, d2) + 1e-9
    q, dist = project_onto_hull(A.points, A.points[np.argmax(A.points @ s)])
    assert dist <= 1e-9


def test_grid_properties():
    g2, g3 = default_grid(2), default_grid(3)
    assert g2.count == 32
    assert g3.count >= 128
    for g in (g2, g3, default_grid(1), default_grid(4)):
        assert np.allclose(np.linalg.norm(g.dirs, axis=1), 1.0, atol=1e-12)
        assert g.is_symmetric()
        for axis in np.eye(g.dim):
            assert np.min(np.linalg.norm(g.dirs - axis, axis=1)) < 1e-12


def test_direction_grid_rejects_non_unit():
    with pytest.raises(ValueError):
        DirectionGrid([[2.0, 0.0]])


def test_prune_small_h_keeps_all():
    A = CompactSet([[0.0], [1.0], [2.5]])
    assert len(prune(A, 0.1)) == 3


def test_prune_example():
    out = prune(CompactSet([[0.0], [0.001], [1.0]]), 0.01)
    assert sorted(out.points[:, 0]) == [0.0, 1.0]


def test_prune_is_subset_cover_and_separated():
    rng = np.random.default_rng(7)
    A = CompactSet(rng.uniform(-1, 1, size=(800, 2)))
    h = 0.1
    P = prune(A, h)
    kept = {tuple(p) for p in P.points}
    assert kept <= {tuple(p) for p in A.points}
    assert directed_hausdorff(A, P) <= h
    d = cdist(P.points, P.points)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= h / 2


def test_prune_is_deterministic_under_permutation():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(300, 2))
    a = prune(CompactSet(pts), 0.2).points
    b = prune(CompactSet(pts[rng.permutation(300)]), 0.2).points
    assert np.array_equal(a, b)


def _grid_cover_count(A, r):
    """Greedy cover of conv(A) by r-balls centred on a fine grid (an upper bound on the covering number)."""
    lo, hi = A.points.min(axis=0), A.points.max(axis=0)
    step = r / 4
    axes = [np.arange(a, b + step, step) for a, b in zip(lo, hi)]
    grid = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    grid = grid[[project_onto_hull(A.points, g)[1] <= 1e-12 for g in grid]]
    uncovered = np.ones(len(grid), bool)
    count = 0
    d = cdist(grid, grid)
    while uncovered.any():
        gain = (d[:, uncovered] <= r).sum(axis=1)
        best = int(np.argmax(gain))
        uncovered &= d[best] > r
        count += 1
    return count


def test_prune_size_bounded_by_hull_covering():
    rng = np.random.default_rng(9)
    A = CompactSet(rng.uniform(0, 1, size=(400, 2)))
    h = 0.2
    P = prune(A, h)
    d = cdist(P.points, P.points)
    np.fill_diagonal(d, np.inf)
    # kept points are more than h apart, so each h/2-ball holds at most one of them
    assert d.min() > h
    assert len(P) <= _grid_cover_count(A, h / 2)


@settings(max_examples=40, deadline=None)
@given(clouds(max_size=30), st.floats(0.05, 3.0))
def test_prune_idempotent(A, h):
    once = prune(A, h)
    twice = prune(once, h)
    assert np.array_equal(np.sort(once.points, axis=0), np.sort(twice.points, axis=0))


def test_convex_hull_collinear():
    A = CompactSet([[0, 0], [1, 1], [2, 2], [0.5, 0.5]])
    H = convex_hull(A)
    assert sorted(map(tuple, H.points)) == [(0.0, 0.0), (2.0, 2.0)]


def test_convex_hull_of_convex_position_is_identity():
    A = CompactSet.circle([0, 0], 1.0, 12)
    H = convex_hull(A)
    assert len(H) == 12
    assert hausdorff(H, A) == 0.0


def _brute_hull(pts):
    # a point is extreme iff it is not in the convex hull of the others (checked by triangles in R^2)
    n = len(pts)
    extreme = []
    for i in range(n):
        p = pts[i]
        others = [pts[j] for j in range(n) if j != i]
        inside = False
        for a, b, c in itertools.combinations(others, 3):
            m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
            if abs(np.linalg.det(m)) < 1e-14:
                continue
            lam = np.linalg.solve(m, p - a)
            if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
                inside = True
                break
        if not inside:
            extreme.append(tuple(p))
    return sorted(extreme)


def test_convex_hull_matches_brute_force():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(25, 2))
    H = convex_hull(CompactSet(pts))
    assert sorted(map(tuple, H.points)) == _brute_hull(pts)
    assert H.meta["hull_exact"]


def test_convex_hull_high_dimension_is_flagged():
    pts = np.random.default_rng(12).normal(size=(40, 5))
    H = convex_hull(CompactSet(pts))
    assert not H.meta["hull_exact"]
    assert len(H) <= 40


def test_compact_set_validation():
    with pytest.raises(ValueError):
        CompactSet(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        CompactSet(np.zeros((0, 2)))


def test_csv_and_dict_round_trip(tmp_path):
    A = CompactSet(np.random.default_rng(4).normal(size=(7, 3)), resolution=0.1)
    path = tmp_path / "a.csv"
    A.to_csv(path)
    assert path.read_text().splitlines()[0] == "x1,x2,x3"
    B = CompactSet.from_csv(path)
    assert np.array_equal(A.points, B.points)
    C = CompactSet.from_dict(A.to_dict())
    assert np.array_equal(A.points, C.points) and C.resolution == 0.1


def test_union_contains_both():
    a, b = CompactSet([[0.0]]), CompactSet([[2.0]])
    u = union(a, b)
    assert directed_hausdorff(a, u) == 0.0 and directed_hausdorff(b, u) == 0.0


def _brute_local_extremes(P, dirs, r):
    S = P @ dirs.T
    d = cdist(P, P)
    out = []
    for i in range(len(P)):
        nb = np.flatnonzero((d[i] <= r) & (np.arange(len(P)) != i))
        out.append(any(np.all(S[nb, k] <= S[i, k]) for k in range(len(dirs))))
    return np.array(out)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_local_extremes_match_brute_force(dim):
    P = np.random.default_rng(dim).uniform(0, 1, (200, dim))
    dirs = default_grid(dim).dirs
    assert np.array_equal(local_extreme_mask(P, dirs, 0.15), _brute_local_extremes(P, dirs, 0.15))


def test_local_extremes_on_two_clusters():
    P = np.array([[0.0], [0.1], [0.2], [1.0], [1.1]])
    assert local_extreme_mask(P, default_grid(1).dirs, 0.3).tolist() == [True, False, True, True, True]


def test_local_radius_keeps_inner_component_edges():
    # two separated clusters: with the local rule both inner edges survive the net
    pts = np.concatenate([np.linspace(0.0, 0.1, 21), np.linspace(0.5, 0.6, 21)])[:, None]
    plain = prune_points(pts, 0.03, exempt_support=True)[:, 0]
    local = prune_points(pts, 0.03, exempt_support=True, local_radius=0.09)[:, 0]
    assert 0.1 in local and 0.5 in local
    assert len(local) <= len(plain) + 2
