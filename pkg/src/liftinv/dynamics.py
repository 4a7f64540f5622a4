"""Discrete-time nonlinear systems ``x+ = f(x)``, trajectories and the stacked
map ``F_M(x) = (x, f(x), ..., f^M(x))``.

All evaluation routines accept a single state of shape ``(n,)`` or a batch of
shape ``(N, n)`` and return the matching shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import geometry
from ._monomials import graded_key

logger = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    """A trajectory produced a non-finite value."""


Coefficients = tuple[tuple[tuple[tuple[int, ...], float], ...], ...]


def _normalize_coefficients(coeffs, dim: int | None = None) -> Coefficients:
    out = []
    for row in coeffs:
        items = row.items() if isinstance(row, Mapping) else row
        acc: dict[tuple[int, ...], float] = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            if dim is not None and len(alpha) != dim:
                raise ValueError(f"exponent {alpha} has length {len(alpha)}, expected {dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            acc[alpha] = acc.get(alpha, 0.0) + float(c)
        out.append(tuple(sorted(acc.items(), key=lambda kv: graded_key(kv[0]))))
    return tuple(out)


def _poly_eval(coeffs: Coefficients, x: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient table on a batch, summing in canonical order."""
    N, n = x.shape
    out = np.zeros((N, len(coeffs)))
    cache: dict[tuple[int, ...], np.ndarray] = {}
    for i, row in enumerate(coeffs):
        acc = np.zeros(N)
        for alpha, c in row:
            mono = cache.get(alpha)
            if mono is None:
                mono = np.ones(N)
                for j, a in enumerate(alpha):
                    for _ in range(a):
                        mono = mono * x[:, j]
                cache[alpha] = mono
            acc = acc + c * mono
        out[:, i] = acc
    return out


def _affine_gradient_from_coefficients(coeffs: Coefficients, n: int):
    """``(A0, [G_1..G_n])`` with ``grad f(x) = A0 + sum_k x_k G_k``, or None
    when some term has degree above two."""
    A0 = np.zeros((len(coeffs), n))
    G = np.zeros((n, len(coeffs), n))
    for i, row in enumerate(coeffs):
        for alpha, c in row:
            deg = sum(alpha)
            if deg > 2:
                return None
            if deg == 1:
                A0[i, alpha.index(1)] += c
            elif deg == 2:
                for j in range(n):
                    if alpha[j] == 0:
                        continue
                    rest = list(alpha)
                    rest[j] -= 1
                    k = rest.index(1)
                    G[k, i, j] += c * alpha[j]
    return A0, tuple(G)


@dataclass(frozen=True)
class NonlinearSystem:
    """Evaluatable map ``f: R^n -> R^n``.

    Parameters
    ----------
    dim : int
        State dimension ``n``.
    func : callable
        Batched map ``(N, n) -> (N, n)``.
    coefficients : tuple, optional
        Polynomial coefficient table, one tuple of ``(exponent, coefficient)``
        per output coordinate.  ``None`` for black-box systems.
    affine_gradient : tuple, optional
        ``(A0, (G_1, ..., G_n))`` such that ``grad f(x) = A0 + sum_k x_k G_k``.
    factored : tuple, optional
        ``(A, (Abar_1, ..., Abar_n))`` with ``f(x) = (A + sum_k x_k Abar_k) x``.
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    coefficients: Coefficients | None = None
    affine_gradient: tuple | None = None
    factored: tuple | None = None
    name: str = ""

    @classmethod
    def polynomial(cls, coefficients, factored=None, name: str = "") -> "NonlinearSystem":
        coeffs = _normalize_coefficients(coefficients)
        dims = {len(alpha) for row in coeffs for alpha, _ in row}
        if len(dims) > 1:
            raise ValueError("inconsistent exponent lengths in coefficient table")
        n = dims.pop() if dims else len(coeffs)
        if n != len(coeffs):
            raise ValueError(f"{len(coeffs)} output rows for a {n}-dimensional state")
        coeffs = _normalize_coefficients(coeffs, n)
        grad = _affine_gradient_from_coefficients(coeffs, n)
        return cls(n, lambda x: _poly_eval(coeffs, x), coeffs, grad,
                   _check_factored(factored, n), name)

    @classmethod
    def black_box(cls, dim: int, func, affine_gradient=None, factored=None,
                  name: str = "") -> "NonlinearSystem":
        return cls(dim, func, None, affine_gradient, _check_factored(factored, dim), name)

    @classmethod
    def linear(cls, A, name: str = "") -> "NonlinearSystem":
        A = np.atleast_2d(np.asarray(A, float))
        n = A.shape[0]
        coeffs = [[(tuple(int(k == j) for k in range(n)), A[i, j])
                   for j in range(n) if A[i, j] != 0.0] for i in range(n)]
        return cls.polynomial(coeffs, factored=(A, [np.zeros((n, n))] * n), name=name)

    @property
    def form(self) -> str:
        return "polynomial" if self.coefficients is not None else "black-box"

    @property
    def degree(self) -> int | None:
        if self.coefficients is None:
            return None
        return max((sum(a) for row in self.coefficients for a, _ in row), default=0)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.ndim == 1:
            return np.asarray(self.func(x[None, :]), float)[0]
        return np.asarray(self.func(x), float)

    __call__ = eval

    def gradient(self, x) -> np.ndarray:
        """Jacobian at ``x`` (single point) from the affine-gradient data."""
        if self.affine_gradient is None:
            raise ValueError("system has no affine gradient")
        A0, G = self.affine_gradient
        x = np.asarray(x, float)
        return A0 + np.tensordot(x, np.asarray(G), axes=1)

    def factor_matrix(self, x) -> np.ndarray:
        """``A + Abar(x)`` for the declared factored form."""
        if self.factored is None:
            raise ValueError("system has no factored form")
        A, Abar = self.factored
        return A + np.tensordot(np.asarray(x, float), np.asarray(Abar), axes=1)

    def check_factored(self, points) -> float:
        """Max deviation ``|(A + Abar(x)) x - f(x)|`` over ``points``."""
        pts = np.atleast_2d(np.asarray(points, float))
        fx = self.eval(pts)
        fac = np.array([self.factor_matrix(p) @ p for p in pts])
        return float(np.max(np.abs(fx - fac))) if len(pts) else 0.0


def _check_factored(factored, n: int):
    if factored is None:
        return None
    A, Abar = factored
    A = np.asarray(A, float)
    Abar = tuple(np.asarray(a, float) for a in Abar)
    if A.shape != (n, n) or len(Abar) != n or any(a.shape != (n, n) for a in Abar):
        raise ValueError("factored form must be (n x n matrix, n matrices of n x n)")
    return A, Abar


def iterate(sys: NonlinearSystem, x, t: int) -> np.ndarray:
    """``f^t(x)``; ``t = 0`` returns ``x`` unchanged.

    Raises
    ------
    DivergenceError
        If a non-finite value appears along the way.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    y = np.asarray(x, float)
    for _ in range(t):
        with np.errstate(over="ignore", invalid="ignore"):
            y = sys.eval(y)
        if not np.all(np.isfinite(y)):
            raise DivergenceError("non-finite state encountered")
    return y


def stack_F(sys: NonlinearSystem, x, M: int, check: bool = True) -> np.ndarray:
    """``(x, f(x), ..., f^M(x))`` concatenated along the last axis."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    y = np.asarray(x, float)
    blocks = [y]
    for _ in range(M):
        with np.errstate(over="ignore", invalid="ignore"):
            y = sys.eval(y)
        if check and not np.all(np.isfinite(y)):
            raise DivergenceError("non-finite state encountered")
        blocks.append(y)
    return np.concatenate(blocks, axis=-1)


@dataclass(frozen=True)
class SampleSet:
    """Sample points with precomputed trajectories.

    Attributes
    ----------
    points : ndarray, shape (N, n)
    trajectories : ndarray, shape (N, horizon + 1, n)
        ``trajectories[i, l] = f^l(points[i])``; NaN after divergence.
    horizon : int
    violation_index : ndarray, shape (N,)
        Smallest ``l`` with ``f^l(x)`` outside the region, ``inf`` if none
        within the horizon.
    """

    points: np.ndarray
    trajectories: np.ndarray
    horizon: int
    violation_index: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, mask) -> "SampleSet":
        mask = np.asarray(mask)
        return SampleSet(self.points[mask], self.trajectories[mask],
                         self.horizon, self.violation_index[mask])

    def largest_populated_k(self) -> int:
        """Largest ``k <= horizon`` such that some point lies in ``O_k``."""
        if len(self) == 0:
            return -1
        vi = np.minimum(self.violation_index, self.horizon + 1)
        return int(np.max(vi)) - 1


def build_sample(sys: NonlinearSystem, region: geometry.Polytope, points,
                 t_f: int, tol: float = geometry.ABS_TOL) -> SampleSet:
    """Simulate every point for ``t_f`` steps and record when it leaves ``region``.

    Points are kept even when they start outside the region; a divergent
    trajectory counts as leaving at its first non-finite step.
    """
    if t_f < 1:
        raise ValueError("t_f must be at least 1")
    pts = np.atleast_2d(np.asarray(points, float)).reshape(-1, sys.dim)
    N, n = pts.shape
    traj = np.full((N, t_f + 1, n), np.nan)
    traj[:, 0] = pts
    alive = np.all(np.isfinite(pts), axis=1)
    for t in range(t_f):
        nxt = np.full((N, n), np.nan)
        if np.any(alive):
            with np.errstate(over="ignore", invalid="ignore"):
                nxt[alive] = sys.eval(traj[alive, t])
        alive &= np.all(np.isfinite(nxt), axis=1)
        nxt[~alive] = np.nan
        traj[:, t + 1] = nxt
    finite = np.all(np.isfinite(traj), axis=2)
    with np.errstate(invalid="ignore"):
        inside = np.all(traj @ region.H.T <= region.h + tol, axis=2) & finite
    vi = np.where(inside.all(axis=1), np.inf, np.argmin(inside, axis=1).astype(float))
    return SampleSet(pts, traj, t_f, vi)
