import numpy as np
import pytest

from liftinv import geometry
from liftinv.dynamics import NonlinearSystem, build_sample
from liftinv.geometry import MismatchSet, Polytope
from liftinv.immersion import assemble
from liftinv.invariance import (ExhaustionError, HorizonError, disturbance_gain, linear_mais,
                                model_mais, nonlinear_Ok_membership, output_bounds,
                                preimage_contains, run_algorithm1, sample_preimage,
                                tightened_mais)
from liftinv.lifting import CascadeSystem, build_cascade_immersion
from liftinv.sampling import grid_points, random_points

BOX2 = Polytope.box([-1, -1], [1, 1])


def _rot(deg):
    t = np.deg2rad(deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def test_contraction_keeps_box():
    res = linear_mais(0.5 * np.eye(2), np.eye(2), BOX2)
    assert res.k_star == 0 and res.finitely_determined
    assert geometry.set_equal(res.omega, BOX2)


def test_rotation_matches_bruteforce():
    A = 0.9 * _rot(30)
    res = linear_mais(A, np.eye(2), BOX2)
    rows = [BOX2.H @ np.linalg.matrix_power(A, k) for k in range(51)]
    brute = geometry.remove_redundancy(Polytope(np.vstack(rows), np.tile(BOX2.h, 51)))
    assert geometry.set_equal(res.omega, brute, 1e-9)
    assert res.omega.n_rows > 4


def test_nilpotent():
    res = linear_mais([[0.0, 1.0], [0.0, 0.0]], np.eye(2), BOX2)
    assert res.k_star <= 1


def test_zero_mismatch_reduces_to_linear():
    A = 0.8 * _rot(50)
    a = tightened_mais(A, np.eye(2), BOX2, MismatchSet.zero(2))
    b = linear_mais(A, np.eye(2), BOX2)
    assert geometry.set_equal(a.omega, b.omega)
    assert a.k_star == b.k_star


def test_tightening_trace_accumulates():
    res = tightened_mais([[0.5]], [[1.0]], Polytope.box([-1], [1]),
                         MismatchSet(np.eye(1), 0.1), prune=False, k_max=3)
    assert res.tightening_trace[1] == pytest.approx([0.1, 0.1])


def test_truncation_flag():
    # a pure rotation is not asymptotically stable: the iteration never settles
    res = linear_mais(_rot(1.0 / np.pi * 10), np.eye(2), BOX2, k_max=5)
    assert not res.finitely_determined and res.k_star == 5


def test_shape_validation():
    with pytest.raises(geometry.DimensionError):
        tightened_mais(np.eye(2), np.eye(3), BOX2)
    with pytest.raises(geometry.DimensionError):
        tightened_mais(np.eye(2), np.eye(2), BOX2, MismatchSet(np.eye(3), 0.1))


def test_preimage_identity_transform():
    A = 0.9 * _rot(30)
    model = assemble((A,), np.eye(2), 0.0)
    res = model_mais(model, BOX2)
    sys = NonlinearSystem.linear(A)
    pts = random_points(BOX2, 2000, seed=0)
    assert np.array_equal(preimage_contains(model, sys, res.omega, pts),
                          geometry.contains(res.omega, pts))
    assert isinstance(preimage_contains(model, sys, res.omega, [0.0, 0.0]), bool)


def test_preimage_is_invariant_building(building_cfg, building_a1):
    model, omega = building_a1.model, building_a1.result.omega
    x, draws = sample_preimage(model, building_cfg.system, omega, 3000, seed=4)
    assert len(x) == 3000 and draws >= 3000
    fx = building_cfg.system.eval(x)
    assert np.all(preimage_contains(model, building_cfg.system, omega, fx, 1e-7))
    assert np.all(geometry.contains(building_cfg.X, x))


def test_wiener_preimage_inside_constraints(wiener_cfg, wiener_model):
    C, Xo = wiener_cfg.lifted_constraints(wiener_model)
    res = model_mais(wiener_model, Xo, 40, output_map=C)
    assert not res.empty
    lo, hi = output_bounds(wiener_model, res.omega)
    xlo, xhi = geometry.bounding_box(wiener_cfg.X)
    assert np.all(lo >= xlo - 1e-9) and np.all(hi <= xhi + 1e-9)
    pts, _ = sample_preimage(wiener_model, wiener_cfg.system, res.omega, 200, seed=0,
                             prefilter=wiener_cfg.admissible)
    assert len(pts) == 200
    assert np.all(wiener_cfg.admissible(pts))


def test_nonfinite_lifted_values_are_outside():
    blow = NonlinearSystem.polynomial([[((2,), 1e300)]])
    model = assemble((np.zeros((1, 1)), np.zeros((1, 1))), np.eye(2), 0.0)
    assert not preimage_contains(model, blow, Polytope.universe(2), [1e10])


def test_algorithm1_building(building_a1):
    assert building_a1.M == 5
    assert building_a1.delta_schedule == [0.01]
    assert building_a1.basis_dims[5] == building_a1.model.m


@pytest.mark.filterwarnings("ignore:regression Gram matrix")
def test_algorithm1_exact_cascade_matches_lifted_mais():
    cs = CascadeSystem.from_phi([[0.5]], [[0.9]], [[((2,), 1.0)]])
    sys = cs.as_system()
    X = Polytope.box([-1, -1], [1, 1])
    s = build_sample(sys, X, grid_points(X, 0.05), 6)
    a1 = run_algorithm1(sys, X, 1e-6, s, M_max=3, ridge=0.0)
    assert a1.M == 1
    assert a1.model.delta_hat < 1e-9
    exact = build_cascade_immersion(cs)
    ref = model_mais(exact, X)
    pts = random_points(X, 3000, seed=2)
    got = preimage_contains(a1.model, sys, a1.result.omega, pts)
    want = preimage_contains(exact, sys, ref.omega, pts)
    assert np.mean(got == want) > 0.999


def test_algorithm1_exhaustion(building_sample, building_cfg):
    with pytest.raises(ExhaustionError) as err:
        run_algorithm1(building_cfg.system, building_cfg.X, 1e-12, building_sample, M_max=3)
    assert set(err.value.delta_curve) == {0, 1, 2, 3}
    with pytest.raises(ValueError):
        run_algorithm1(building_cfg.system, building_cfg.X, 0.01, building_sample, M_max=20)


def test_Ok_horizon(building_sample):
    with pytest.raises(HorizonError):
        nonlinear_Ok_membership(building_sample, building_sample.horizon + 1)


def test_disturbance_gain():
    assert disturbance_gain(0, 2.0) == 1.0
    assert disturbance_gain(2, 2.0) == pytest.approx(7.0)
    assert disturbance_gain(3, 1.0) == 4.0
