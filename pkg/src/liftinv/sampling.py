"""Grid and random sample generation with covering certificates.

A grid of pitch ``eta`` is an ``eta * sqrt(n)``-covering of any set it is
restricted to, provided the grid extends a little beyond the set.  For
i.i.d. uniform samples only a probability bound is available; it needs the
packing number, which is replaced by a volume ratio.
"""

from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass
from itertools import combinations
from math import gamma, pi

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .geometry import Polytope

logger = logging.getLogger(__name__)

DEFAULT_GRID_CAP = 2_000_000


class GridTooLargeError(ValueError):
    """Requested grid exceeds the node cap."""


class DegenerateRegionError(ValueError):
    """Rejection sampling acceptance rate is too low."""


def grid_points(region: Polytope, eta: float, cap: int = DEFAULT_GRID_CAP,
                tol: float = geometry.ABS_TOL) -> np.ndarray:
    """Nodes of ``eta * Z^n`` inside ``region``, in lexicographic order.

    Nodes are formed as integer multiples of ``eta`` so the output does not
    depend on floating accumulation.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    lo, hi = geometry.bounding_box(region)
    i_lo = np.ceil(lo / eta - 1e-9).astype(np.int64)
    i_hi = np.floor(hi / eta + 1e-9).astype(np.int64)
    counts = np.maximum(i_hi - i_lo + 1, 0)
    total = int(np.prod(counts.astype(float)))
    if total > cap:
        raise GridTooLargeError(f"grid with pitch {eta} has {total} nodes (cap {cap})")
    if total == 0:
        return np.zeros((0, region.dim))
    axes = [np.arange(a, b + 1) for a, b in zip(i_lo, i_hi)]
    ints = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.dim)
    pts = ints * eta
    return pts[geometry.contains(region, pts, tol)]


def pitch_for_count(region: Polytope, target: int) -> float:
    """Grid pitch giving roughly ``target`` nodes, from the region's area/volume."""
    vol = volume(region)
    return float((vol / target) ** (1.0 / region.dim))


def random_points(region: Polytope, N: int, seed=None, batch: int = 4096,
                  min_acceptance: float = 1e-4) -> np.ndarray:
    """``N`` i.i.d. uniform points by rejection from the bounding box.

    Raises
    ------
    DegenerateRegionError
        If the acceptance rate drops below ``min_acceptance``.
    """
    if N == 0:
        return np.zeros((0, region.dim))
    rng = np.random.default_rng(seed)
    lo, hi = geometry.bounding_box(region)
    out, drawn, accepted = [], 0, 0
    while accepted < N:
        cand = rng.uniform(lo, hi, size=(max(batch, N), region.dim))
        ok = geometry.contains(region, cand, 0.0)
        drawn += len(cand)
        accepted += int(ok.sum())
        out.append(cand[ok])
        if drawn >= 10 / min_acceptance and accepted / drawn < min_acceptance:
            raise DegenerateRegionError(f"acceptance rate {accepted / drawn:.2e}")
    return np.vstack(out)[:N]


def inflate_region(X: Polytope, rho: float) -> Polytope:
    """Outer halfspace approximation of ``X + rho * B``: every normalized row
    offset grows by ``rho``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    Xn = X.normalized()
    return Polytope(Xn.H, Xn.h + rho)


def deflate_pitch(rho: float, L_f: float, k: int) -> float:
    """``min(1, L_f^-k) * rho``."""
    if L_f <= 0:
        raise ValueError("L_f must be positive")
    return float(min(1.0, L_f ** (-k)) * rho)


@dataclass(frozen=True)
class CoveringCheck:
    passed: bool
    worst_distance: float
    epsilon: float
    probes: int


def covering_check(points, region: Polytope, epsilon: float, probes: int = 10_000,
                   seed=None) -> CoveringCheck:
    """Try to falsify that ``points`` is an ``epsilon``-covering of ``region``.

    Random probes in the region are matched to their nearest sample; passing
    only means no counterexample was found.
    """
    if probes < 1:
        raise ValueError("probes must be at least 1")
    pts = np.atleast_2d(np.asarray(points, float))
    probe = random_points(region, probes, seed)
    if pts.size == 0:
        return CoveringCheck(False, float("inf"), float(epsilon), probes)
    dist, _ = cKDTree(pts).query(probe)
    worst = float(dist.max())
    return CoveringCheck(worst <= epsilon, worst, float(epsilon), probes)


# ------------------------------------------------------------------- volumes

def ball_volume(n: int, r: float = 1.0) -> float:
    return float(pi ** (n / 2) / gamma(n / 2 + 1) * r ** n)


def _box_sides(X: Polytope):
    """Side lengths when ``X`` is an axis-aligned box, else ``None``."""
    Xn = X.normalized()
    nz = np.abs(Xn.H) > 1e-12
    if not np.all(nz.sum(axis=1) == 1):
        return None
    lo, hi = geometry.bounding_box(X)
    return hi - lo


def volume(X: Polytope) -> float:
    """Area in 2-D, box volume otherwise."""
    if X.dim == 2:
        return geometry.polygon_area(geometry.vertices_2d(X))
    sides = _box_sides(X)
    if sides is None:
        raise geometry.DimensionError("volume only available for 2-D polytopes and boxes")
    return float(np.prod(sides))


def inflated_volume(X: Polytope, r: float) -> float:
    """``vol(X + r B)``; exact via the Steiner formula in 2-D and for boxes."""
    if X.dim == 2:
        V = geometry.vertices_2d(X)
        return (geometry.polygon_area(V) + geometry.polygon_perimeter(V) * r + pi * r * r)
    sides = _box_sides(X)
    if sides is None:
        raise geometry.DimensionError("inflated volume only for 2-D polytopes and boxes")
    n = X.dim
    total = 0.0
    for j in range(n + 1):
        e_j = sum(float(np.prod([sides[i] for i in S])) for S in combinations(range(n), j))
        total += e_j * ball_volume(n - j, r)
    return total


def packing_bound(X: Polytope, eta: float) -> float:
    """Upper estimate of the packing number ``vol(X + eta/2 B) / vol(eta/2 B)``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    r = eta / 2
    return inflated_volume(X, r) / ball_volume(X.dim, r)


@dataclass(frozen=True)
class CoveringCertificate:
    epsilon: float
    kind: str
    eta: float
    probability_bound: float
    packing_bound: float | None
    conservative: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


def grid_certificate(X: Polytope, eta: float) -> CoveringCertificate:
    try:
        pb = packing_bound(X, eta)
    except geometry.DimensionError:
        pb = None
    return CoveringCertificate(float(eta * np.sqrt(X.dim)), "grid", float(eta), 1.0, pb)


def random_certificate(X: Polytope, eta: float, rho: float, N: int) -> CoveringCertificate:
    """Probability that ``N`` uniform samples form a ``2 eta``-covering."""
    try:
        pb = packing_bound(X, eta)
        frac = ball_volume(X.dim, eta) / inflated_volume(X, rho)
        prob = 1.0 - pb * (1.0 - min(frac, 1.0)) ** N
        prob = float(min(max(prob, 0.0), 1.0))
    except geometry.DimensionError:
        pb, prob = None, float("nan")
    return CoveringCertificate(2.0 * eta, "random", float(eta), prob, pb)


# ----------------------------------------------------------------------- I/O

def points_to_csv(points) -> str:
    pts = np.atleast_2d(np.asarray(points, float))
    buf = io.StringIO()
    buf.write(",".join(f"x{i + 1}" for i in range(pts.shape[1])) + "\n")
    np.savetxt(buf, pts, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def points_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) <= 1:
        n = len(lines[0].split(",")) if lines else 0
        return np.zeros((0, n))
    return np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
