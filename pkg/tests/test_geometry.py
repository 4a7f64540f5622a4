import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftinv import geometry
from liftinv.geometry import MismatchSet, Polytope


def test_support_box_corner(unit_box):
    assert geometry.support(unit_box, [1, 1]) == pytest.approx(2.0)


def test_support_mismatch_axis():
    S = MismatchSet(np.eye(2), 0.1)
    assert geometry.support(S, [1, 0]) == pytest.approx(0.1)


def test_support_mismatch_closed_form_vs_sampling():
    S = MismatchSet(np.array([[1.0], [1.0]]), 0.5, 0.2)
    a = np.array([1.0, 1.0])
    closed = geometry.support(S, a)
    assert closed == pytest.approx(0.5 * 2 + 0.2 * np.sqrt(2))
    # dense sampling of w in [-0.5, 0.5] and v on the 0.2 circle
    w = np.linspace(-0.5, 0.5, 201)
    th = np.linspace(0, 2 * np.pi, 721)
    v = 0.2 * np.column_stack([np.cos(th), np.sin(th)])
    vals = (w[:, None] * a.sum()) + (v @ a)[None, :]
    assert vals.max() <= closed + 1e-12
    assert vals.max() == pytest.approx(closed, abs=1e-5)


def test_support_raises():
    with pytest.raises(geometry.EmptyPolytopeError):
        geometry.support(Polytope([[1.0], [-1.0]], [-1.0, -1.0]), [1.0])
    with pytest.raises(geometry.UnboundedError):
        geometry.support(Polytope([[1.0]], [1.0]), [-1.0])
    with pytest.raises(geometry.DimensionError):
        geometry.support(Polytope.box([0], [1]), [1.0, 0.0])


def test_tighten_examples(unit_box):
    T = geometry.tighten(unit_box, MismatchSet(np.eye(2), 0.2))
    assert geometry.set_equal(T, Polytope.box([-0.8, -0.8], [0.8, 0.8]))
    I1 = Polytope.box([-1], [1])
    pt = geometry.tighten(I1, MismatchSet(np.eye(1), 1.0))
    assert not geometry.is_empty(pt)
    assert geometry.bounding_box(pt)[1][0] == pytest.approx(0.0)
    assert geometry.bounding_box(pt)[0][0] == pytest.approx(0.0)
    assert geometry.is_empty(geometry.tighten(I1, MismatchSet(np.eye(1), 1.5)))


def test_tighten_shape_mismatch(unit_box):
    with pytest.raises(geometry.DimensionError):
        geometry.tighten(unit_box, MismatchSet(np.eye(3), 0.1))


def test_intersect_examples(unit_box):
    half = geometry.intersect(unit_box, Polytope([[1.0, 0.0]], [0.0]))
    assert geometry.set_equal(half, Polytope.box([-1, -1], [0, 1]))
    same = geometry.remove_redundancy(geometry.intersect(unit_box, unit_box))
    assert same.n_rows == 4
    assert geometry.is_empty(geometry.intersect(Polytope.box([-1], [1]),
                                                Polytope.box([2], [3])))


def test_remove_redundancy_extra_row(unit_box):
    P = Polytope(np.vstack([unit_box.H, [[1.0, 0.0]]]), np.append(unit_box.h, 2.0))
    R = geometry.remove_redundancy(P)
    assert R.n_rows == 4
    assert geometry.remove_redundancy(unit_box).n_rows == 4


def test_remove_redundancy_keeps_tighter_duplicate():
    # nearly identical normals must not let the looser copy survive
    H = np.array([[1.0, 0.0], [1.0, 1e-15], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    h = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
    R = geometry.remove_redundancy(Polytope(H, h))
    assert geometry.bounding_box(R)[1][0] == pytest.approx(1.0)


def _brute_prune(P, tol=1e-9):
    keep = []
    for i in range(P.n_rows):
        others = [j for j in range(P.n_rows) if j != i]
        st_, val, _ = geometry._lp_max(P.H[i], P.H[others], P.h[others])
        if st_ == "unbounded" or val > P.h[i] + tol:
            keep.append(i)
    return Polytope(P.H[keep], P.h[keep])


def test_remove_redundancy_random_matches_bruteforce():
    rng = np.random.default_rng(7)
    for _ in range(10):
        th = rng.uniform(0, 2 * np.pi, 12)
        H = np.column_stack([np.cos(th), np.sin(th)])
        P = Polytope(H, rng.uniform(0.5, 1.5, 12))
        R = geometry.remove_redundancy(P)
        B = _brute_prune(P)
        assert geometry.set_equal(R, P)
        assert geometry.set_equal(R, B)
        assert R.n_rows <= B.n_rows


def test_emptiness_and_containment(unit_box):
    assert geometry.is_empty(Polytope([[1.0], [-1.0]], [-1.0, -1.0]))
    assert geometry.contains(unit_box, [0, 0])
    assert geometry.contains(unit_box, [1 + 1e-12, 0], tol=1e-9)
    assert not geometry.contains(unit_box, [1.1, 0])
    mask = geometry.contains(unit_box, np.array([[0, 0], [2, 0]]))
    assert mask.tolist() == [True, False]


def test_subset_and_equality(unit_box):
    small = Polytope.box([-0.5, -0.5], [0.5, 0.5])
    assert geometry.is_subset(small, unit_box)
    assert not geometry.is_subset(unit_box, small)
    assert geometry.set_equal(unit_box, unit_box.normalized())


def test_vertices_box(unit_box):
    V = geometry.vertices_2d(unit_box)
    assert len(V) == 4
    assert {tuple(np.round(v, 12)) for v in V} == set(itertools.product([-1.0, 1.0], repeat=2))
    assert geometry.polygon_area(V) == pytest.approx(4.0)
    assert geometry.polygon_perimeter(V) == pytest.approx(8.0)


def test_hull_drops_interior():
    P, V = geometry.hull_2d([(0, 0), (1, 0), (0, 1), (0.2, 0.2)])
    assert len(V) == 3
    assert geometry.polygon_area(V) == pytest.approx(0.5)
    assert geometry.contains(P, [0.2, 0.2])


def test_vertices_match_pairwise_bruteforce(building_cfg):
    X = building_cfg.X
    V = geometry.vertices_2d(X)
    brute = []
    for i, j in itertools.combinations(range(X.n_rows), 2):
        M = X.H[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, X.h[[i, j]])
        if np.all(X.H @ x <= X.h + 1e-9):
            brute.append(x)
    brute = np.unique(np.round(brute, 9), axis=0)
    got = np.unique(np.round(V, 9), axis=0)
    assert got.shape == brute.shape
    assert np.allclose(got, brute, atol=1e-8)


def test_bounding_box_and_boundedness(unit_box):
    lo, hi = geometry.bounding_box(unit_box)
    assert np.allclose(lo, -1) and np.allclose(hi, 1)
    assert geometry.is_bounded(unit_box)
    assert not geometry.is_bounded(Polytope([[1.0, 0.0]], [1.0]))


def test_lp_unbounded_not_reported_infeasible():
    # presolve can misreport such problems; the slab is feasible but unbounded
    H = np.array([[-2.0, 0.4, 0.0], [1.0, -0.2, 0.0]])
    status, _, _ = geometry._lp_max(np.array([0.0, 0.0, 1.0]), H, np.array([1.0, 1.0]))
    assert status == "unbounded"


def test_text_roundtrip(unit_box):
    txt = geometry.polytope_to_text(unit_box, {"k_star": 3})
    assert geometry.read_header(txt)["k_star"] == "3"
    back = geometry.polytope_from_text(txt)
    assert np.array_equal(back.H, unit_box.H) and np.array_equal(back.h, unit_box.h)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.0, 0.5))
def test_tighten_shrinks(delta, r):
    P = Polytope.box([-1, -1], [1, 1])
    T = geometry.tighten(P, MismatchSet(np.eye(2), delta, r))
    if not geometry.is_empty(T):
        assert geometry.is_subset(T, P)
