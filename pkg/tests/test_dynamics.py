import numpy as np
import pytest

from liftinv.dynamics import (DivergenceError, NonlinearSystem, build_sample, iterate,
                              stack_F)
from liftinv.geometry import Polytope
from liftinv.invariance import nonlinear_Ok_membership


def test_iterate_scalar():
    half = NonlinearSystem.linear([[0.5]])
    assert iterate(half, [1.0], 3) == pytest.approx([0.125])
    assert np.array_equal(iterate(half, [0.3], 0), [0.3])


def test_building_hand_evaluation(building_cfg):
    assert building_cfg.system.eval([1.0, 1.0]) == pytest.approx([0.5387, 0.5647], abs=1e-12)


def test_polynomial_metadata(building_cfg):
    sys = building_cfg.system
    assert sys.form == "polynomial" and sys.degree == 2 and sys.dim == 2
    x = np.array([0.7, -1.3])
    eps = 1e-6
    num = np.column_stack([(sys.eval(x + eps * e) - sys.eval(x - eps * e)) / (2 * eps)
                           for e in np.eye(2)])
    assert sys.gradient(x) == pytest.approx(num, abs=1e-8)
    assert sys.check_factored(np.random.default_rng(0).uniform(-5, 5, (50, 2))) < 1e-12


def test_polynomial_rejects_inconsistent_table():
    with pytest.raises(ValueError):
        NonlinearSystem.polynomial([[((1, 0), 1.0)], [((1,), 1.0)]])
    with pytest.raises(ValueError):
        NonlinearSystem.polynomial([[((1, 0), 1.0)]])


def test_black_box_batched():
    sys = NonlinearSystem.black_box(2, lambda x: np.column_stack([x[:, 1], -x[:, 0]]))
    assert sys.form == "black-box" and sys.degree is None
    assert sys.eval([1.0, 2.0]) == pytest.approx([2.0, -1.0])
    assert sys.eval(np.ones((3, 2))).shape == (3, 2)


def test_stack_F_examples(doubling):
    assert stack_F(doubling, [1.0], 2) == pytest.approx([1.0, 2.0, 4.0])
    assert stack_F(doubling, [0.7], 0) == pytest.approx([0.7])


def test_stack_F_linear_matches_powers():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 3)) * 0.5
    x = rng.normal(size=3)
    got = stack_F(NonlinearSystem.linear(A), x, 3)
    expected = np.concatenate([np.linalg.matrix_power(A, k) @ x for k in range(4)])
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_divergence_detected():
    blow = NonlinearSystem.polynomial([[((2,), 1e200)]])
    with pytest.raises(DivergenceError):
        iterate(blow, [10.0], 3)


def test_build_sample_violation_indices(doubling):
    X = Polytope.box([-1], [1])
    s = build_sample(doubling, X, [[0.6], [0.0], [3.0]], 2)
    assert s.violation_index[0] == 1
    assert s.violation_index[1] == np.inf
    assert s.violation_index[2] == 0
    assert s.trajectories.shape == (3, 3, 1)
    assert s.largest_populated_k() == 2


def test_build_sample_divergence_counts_as_violation():
    blow = NonlinearSystem.polynomial([[((2,), 1e200)]])
    s = build_sample(blow, Polytope.box([-1e300], [1e300]), [[10.0]], 3)
    assert np.isfinite(s.violation_index[0])
    assert np.isnan(s.trajectories[0, -1, 0])


def test_Ok_membership(doubling):
    X = Polytope.box([-1], [1])
    s = build_sample(doubling, X, np.linspace(-1, 1, 41)[:, None], 5)
    assert not nonlinear_Ok_membership(s, 1)[np.argmin(abs(s.points[:, 0] - 0.6))]
    assert nonlinear_Ok_membership(s, 5)[20]
    masks = [nonlinear_Ok_membership(s, k) for k in range(6)]
    for a, b in zip(masks[:-1], masks[1:]):
        assert np.all(a >= b)


def test_sample_in_reach_set_never_leaves(building_cfg, building_sample):
    from liftinv.certification import polytope_vertices, reach_overapprox
    from liftinv.geometry import contains
    V = polytope_vertices(building_cfg.X)
    for _ in range(5):
        R5, V = reach_overapprox(building_cfg.system, V)
    inside = contains(R5, building_sample.points)
    assert inside.sum() > 100
    assert np.all(building_sample.violation_index[inside] >= 6)
