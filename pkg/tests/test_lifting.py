import numpy as np
import pytest

from liftinv.lifting import (CascadeSystem, LiftIndex, build_cascade_immersion, lift_matrix,
                             lift_matrix_graded, lift_vector, lift_vector_graded, lifted_dim)


def test_lift_vector_two_dims():
    z = np.array([2.0, 3.0])
    assert lift_vector(z, 2) == pytest.approx([4.0, np.sqrt(2) * 6.0, 9.0])


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_lift_vector_scalar(d):
    assert LiftIndex.of(1, d).scalings.tolist() == [1.0]
    assert lift_vector_graded(np.array([1.5]), d) == pytest.approx([1.5 ** k for k in
                                                                   range(1, d + 1)])


def test_lift_norm_identity():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4):
        for d in (1, 2, 3, 4):
            z = rng.normal(size=n)
            assert np.linalg.norm(lift_vector(z, d)) == pytest.approx(np.linalg.norm(z) ** d)


def test_lift_vector_batched():
    Z = np.random.default_rng(0).normal(size=(5, 3))
    assert np.allclose(lift_vector(Z, 2), np.array([lift_vector(z, 2) for z in Z]))
    assert lifted_dim(2, 3) == 9


def test_lift_matrix_scalar_and_diagonal():
    assert np.allclose(lift_matrix([[0.7]], 3), [[0.7 ** 3]])
    a, b = 0.3, -1.7
    assert np.allclose(lift_matrix(np.diag([a, b]), 2), np.diag([a * a, a * b, b * b]))


def test_lift_matrix_defining_property(wiener_cfg):
    Az = wiener_cfg.cascade.A_z
    L = lift_matrix(Az, 2)
    assert L.shape == (3, 3)
    Z = np.random.default_rng(4).normal(size=(100, 2))
    assert np.allclose(lift_vector(Z @ Az.T, 2), lift_vector(Z, 2) @ L.T, atol=1e-12)
    G = lift_matrix_graded(Az, 3)
    assert G.shape == (9, 9)
    assert np.allclose(lift_vector_graded(Z @ Az.T, 3), lift_vector_graded(Z, 3) @ G.T,
                       atol=1e-12)


def test_lift_matrix_rejects_nonsquare():
    with pytest.raises(ValueError):
        lift_matrix(np.ones((2, 3)), 2)


def test_cascade_phi_zero():
    A_eta = np.array([[0.5, 0.1], [0.0, 0.3]])
    A_z = np.array([[0.9, 0.2], [-0.2, 0.9]])
    cs = CascadeSystem(A_eta, A_z, (np.zeros((2, 2)), np.zeros((2, 3))))
    model = build_cascade_immersion(cs)
    expected = np.zeros((7, 7))
    expected[:2, :2] = A_eta
    expected[2:, 2:] = lift_matrix_graded(A_z, 2)
    assert np.allclose(model.A, expected)
    x = np.random.default_rng(0).normal(size=(20, 4))
    assert np.abs(model.residual(cs.as_system(), x)).max() < 1e-12


def test_scalar_cascade_hand_matrix():
    cs = CascadeSystem.from_phi([[0.5]], [[0.9]], [[((2,), 1.0)]])
    model = build_cascade_immersion(cs)
    assert np.allclose(model.A, [[0.5, 0, 1], [0, 0.9, 0], [0, 0, 0.81]])
    assert model.exact and model.m == 3


def test_wiener_lift(wiener_cfg, wiener_model):
    assert wiener_model.m == 2 + (2 + 3 + 4)
    x = np.random.default_rng(5).uniform(-1, 1, (1000, 4)) * [5, 5, 3, 3]
    assert np.abs(wiener_model.residual(wiener_cfg.system, x)).max() < 1e-10
    assert np.allclose(wiener_model.transform(wiener_cfg.system, x) @ wiener_model.C.T, x,
                       atol=1e-12)


def test_phi_roundtrip():
    phi = [[((1, 0), 0.5), ((1, 1), -2.0)], [((0, 3), 1.25)]]
    cs = CascadeSystem.from_phi(np.eye(2) * 0.5, [[0.6, 0.8], [-0.8, 0.6]], phi)
    back = {(i, a): c for i, row in enumerate(cs.phi_coefficients()) for a, c in row}
    assert back == pytest.approx({(0, (1, 0)): 0.5, (0, (1, 1)): -2.0, (1, (0, 3)): 1.25})
    z = np.array([0.3, -0.7])
    assert cs.phi(z) == pytest.approx([0.5 * 0.3 - 2 * 0.3 * -0.7, 1.25 * (-0.7) ** 3])


def test_from_phi_validation():
    with pytest.raises(ValueError):
        CascadeSystem.from_phi([[0.5]], [[0.9]], [[((0,), 1.0)]])
    with pytest.raises(ValueError):
        CascadeSystem.from_phi([[0.5]], [[0.9]], [[((3,), 1.0)]], d=2)


def test_lifted_row_matches_polynomial():
    cs = CascadeSystem.from_phi([[0.5]], [[0.9]], [[((2,), 1.0)]])
    row, const = cs.lifted_row([((1, 0), 2.0), ((0, 2), -1.0), ((0, 0), 0.5)])
    x = np.array([0.4, -1.2])
    xi = build_cascade_immersion(cs).transform(cs.as_system(), x)
    assert row @ xi + const == pytest.approx(2 * 0.4 - 1.44 + 0.5)
    with pytest.raises(ValueError):
        cs.lifted_row([((1, 1), 1.0)])
