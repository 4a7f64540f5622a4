import numpy as np
import pytest

from liftinv.geometry import Polytope
from liftinv.sampling import (DegenerateRegionError, GridTooLargeError, covering_check,
                              deflate_pitch, grid_certificate, grid_points, inflate_region,
                              inflated_volume, packing_bound, pitch_for_count, points_from_csv,
                              points_to_csv, random_certificate, random_points, volume)


def test_grid_box():
    pts = grid_points(Polytope.box([0, 0], [2, 2]), 1.0)
    assert len(pts) == 9
    assert np.array_equal(np.unique(pts), [0.0, 1.0, 2.0])


def test_grid_misses_small_region():
    assert len(grid_points(Polytope.box([0.2, 0.2], [0.4, 0.4]), 5.0)) == 0


def test_grid_cap_and_validation(unit_box):
    with pytest.raises(GridTooLargeError):
        grid_points(unit_box, 1e-4, cap=1000)
    with pytest.raises(ValueError):
        grid_points(unit_box, 0.0)


def test_building_grid_size(building_cfg, building_grid):
    eta, pts = building_grid
    assert 12000 <= len(pts) <= 14000
    assert eta == pytest.approx(pitch_for_count(building_cfg.X, 13000))


def test_random_points_contract(unit_box):
    assert random_points(unit_box, 0, seed=1).shape == (0, 2)
    a = random_points(unit_box, 100_000, seed=1)
    assert np.abs(a.mean(axis=0)).max() < 0.02
    assert np.array_equal(random_points(unit_box, 500, seed=7), random_points(unit_box, 500, seed=7))


def test_random_points_degenerate():
    sliver = Polytope([[1.0, 1.0], [-1.0, -1.0], [1, 0], [-1, 0], [0, 1], [0, -1]],
                      [1e-9, 1e-9, 1, 1, 1, 1])
    with pytest.raises(DegenerateRegionError):
        random_points(sliver, 10, seed=0, min_acceptance=1e-3)


def test_inflate_and_deflate(unit_box):
    from liftinv import geometry
    assert geometry.set_equal(inflate_region(unit_box, 0.0), unit_box)
    assert geometry.set_equal(inflate_region(unit_box, 0.5),
                              Polytope.box([-1.5, -1.5], [1.5, 1.5]))
    assert deflate_pitch(1.0, 1.5401, 6) == pytest.approx(1.5401 ** -6)
    assert deflate_pitch(1.0, 1.5401, 6) == pytest.approx(0.0746, abs=5e-4)
    assert deflate_pitch(2.0, 0.5, 3) == 2.0


def test_covering_grid_passes(unit_box):
    eta = 0.1
    chk = covering_check(grid_points(unit_box, eta), unit_box, eta * np.sqrt(2), seed=0)
    assert chk.passed and chk.worst_distance <= eta * np.sqrt(2) / 2 + 1e-12


def test_covering_single_point_fails():
    box = Polytope.box([0, 0], [1, 1])
    chk = covering_check([[0.0, 0.0]], box, 0.1, probes=10_000, seed=0)
    assert not chk.passed
    assert chk.worst_distance == pytest.approx(np.sqrt(2), abs=0.02)
    assert covering_check([[0.0, 0.0]], box, np.sqrt(2), seed=0).passed


def test_packing_bound_values(unit_box):
    assert packing_bound(unit_box, 2.0) == pytest.approx((4 + 8 + np.pi) / np.pi)
    etas = np.geomspace(0.5, 200, 30)
    vals = [packing_bound(unit_box, e) for e in etas]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1.0 and vals[-1] < 1.05
    big = Polytope.box([-2, -2], [2, 2])
    eta = 1e-3
    lead = volume(big) / volume(unit_box)
    assert packing_bound(big, eta) / packing_bound(unit_box, eta) == pytest.approx(lead, rel=1e-2)


def test_box_volumes_nd():
    B = Polytope.box([0, 0, 0], [1, 2, 3])
    assert volume(B) == pytest.approx(6.0)
    assert inflated_volume(B, 0.0) == pytest.approx(6.0)
    # Steiner formula for a box: V + S r + (pi/4) L r^2 + (4/3) pi r^3
    r = 0.5
    S, L = 2 * (2 + 3 + 6), 4 * 6
    expected = 6 + S * r + np.pi / 4 * L * r ** 2 + 4 / 3 * np.pi * r ** 3
    assert inflated_volume(B, r) == pytest.approx(expected)


def test_certificates(building_cfg):
    g = grid_certificate(building_cfg.X, 0.2)
    assert g.epsilon == pytest.approx(0.2 * np.sqrt(2)) and g.kind == "grid"
    r = random_certificate(building_cfg.X, 0.2, 1.0, 50_000)
    assert r.epsilon == pytest.approx(0.4)
    assert 0.0 <= r.probability_bound <= 1.0
    assert random_certificate(building_cfg.X, 0.2, 1.0, 10).probability_bound == 0.0


def test_csv_roundtrip():
    pts = np.random.default_rng(0).normal(size=(7, 3))
    assert np.array_equal(points_from_csv(points_to_csv(pts)), pts)
    assert points_from_csv("x1,x2\n").shape == (0, 2)
