"""Algebraic d-lift of vectors and matrices and exact immersion of cascades

    eta+ = A_eta eta + phi(z),    z+ = A_z z,

with ``phi`` polynomial in ``z``.  Writing ``phi(z) = F z^[1..d]`` gives the
lifted linear system ``[[A_eta, F], [0, A_z^[1..d]]]`` with transformation
``T(eta, z) = (eta, z^[1..d])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import block_diag

from ._monomials import count_of_degree, exponents_of_degree, multinomial
from .dynamics import NonlinearSystem
from .geometry import MismatchSet
from .immersion import LiftedModel


@dataclass(frozen=True)
class LiftIndex:
    """Canonical indexing of degree-``d`` monomials in ``n`` variables."""

    n: int
    d: int
    exponents: tuple
    scalings: np.ndarray

    @classmethod
    @lru_cache(maxsize=None)
    def of(cls, n: int, d: int) -> "LiftIndex":
        if n < 1 or d < 0:
            raise ValueError("need n >= 1 and d >= 0")
        exps = exponents_of_degree(n, d)
        sc = np.sqrt(np.array([multinomial(a) for a in exps], float))
        sc.setflags(write=False)
        return cls(n, d, exps, sc)

    def __len__(self) -> int:
        return len(self.exponents)

    def position(self, alpha) -> int:
        return self.exponents.index(tuple(alpha))


def lifted_dim(n: int, d: int) -> int:
    """Length of ``z^[1..d]``."""
    return sum(count_of_degree(n, k) for k in range(1, d + 1))


def lift_vector(z, d: int) -> np.ndarray:
    """``z^[d]``: scaled degree-``d`` monomials, batched over leading axes."""
    z = np.asarray(z, float)
    idx = LiftIndex.of(z.shape[-1], d)
    out = np.empty(z.shape[:-1] + (len(idx),))
    for k, (alpha, s) in enumerate(zip(idx.exponents, idx.scalings)):
        mono = np.ones(z.shape[:-1])
        for j, a in enumerate(alpha):
            for _ in range(a):
                mono = mono * z[..., j]
        out[..., k] = s * mono
    return out


def lift_vector_graded(z, d: int) -> np.ndarray:
    """``(z^[1], ..., z^[d])``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    return np.concatenate([lift_vector(z, k) for k in range(1, d + 1)], axis=-1)


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def lift_matrix(A, d: int) -> np.ndarray:
    """``A^[d]`` with ``lift_vector(A z, d) == A^[d] @ lift_vector(z, d)``.

    Entries come from expanding ``(A z)^alpha`` symbolically.
    """
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    idx = LiftIndex.of(n, d)
    unit = [tuple(int(i == j) for i in range(n)) for j in range(n)]
    rows = [{unit[j]: A[i, j] for j in range(n) if A[i, j] != 0.0} for i in range(n)]
    one = {(0,) * n: 1.0}
    out = np.zeros((len(idx), len(idx)))
    for r, (alpha, sa) in enumerate(zip(idx.exponents, idx.scalings)):
        poly = one
        for i, a in enumerate(alpha):
            for _ in range(a):
                poly = _poly_mul(poly, rows[i])
        for beta, c in poly.items():
            col = idx.position(beta)
            out[r, col] = sa / idx.scalings[col] * c
    return out


def lift_matrix_graded(A, d: int) -> np.ndarray:
    """Block-diagonal ``diag(A^[1], ..., A^[d])``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    return block_diag(*[lift_matrix(A, k) for k in range(1, d + 1)])


@dataclass(frozen=True)
class CascadeSystem:
    """``eta+ = A_eta eta + F z^[1..d]``, ``z+ = A_z z``."""

    A_eta: np.ndarray
    A_z: np.ndarray
    F_blocks: tuple

    def __post_init__(self):
        A_eta = np.atleast_2d(np.asarray(self.A_eta, float))
        A_z = np.atleast_2d(np.asarray(self.A_z, float))
        if A_eta.shape[0] != A_eta.shape[1] or A_z.shape[0] != A_z.shape[1]:
            raise ValueError("A_eta and A_z must be square")
        blocks = tuple(np.atleast_2d(np.asarray(F, float)) for F in self.F_blocks)
        if not blocks:
            raise ValueError("at least one F block is required")
        for k, F in enumerate(blocks, start=1):
            expected = (A_eta.shape[0], count_of_degree(A_z.shape[0], k))
            if F.shape != expected:
                raise ValueError(f"F_{k} has shape {F.shape}, expected {expected}")
        object.__setattr__(self, "A_eta", A_eta)
        object.__setattr__(self, "A_z", A_z)
        object.__setattr__(self, "F_blocks", blocks)

    @property
    def n_eta(self) -> int:
        return self.A_eta.shape[0]

    @property
    def n_z(self) -> int:
        return self.A_z.shape[0]

    @property
    def d(self) -> int:
        return len(self.F_blocks)

    @property
    def dim(self) -> int:
        return self.n_eta + self.n_z

    @property
    def F(self) -> np.ndarray:
        return np.hstack(self.F_blocks)

    @classmethod
    def from_phi(cls, A_eta, A_z, phi, d: int | None = None) -> "CascadeSystem":
        """Build from a coefficient table of ``phi``: per ``eta`` coordinate a
        list of ``(exponent over z, coefficient)`` pairs."""
        A_eta = np.atleast_2d(np.asarray(A_eta, float))
        n_z = np.atleast_2d(np.asarray(A_z)).shape[0]
        if len(phi) != A_eta.shape[0]:
            raise ValueError(f"phi has {len(phi)} rows, expected {A_eta.shape[0]}")
        degs = [sum(a) for row in phi for a, _ in row]
        if d is None:
            d = max(degs, default=1) or 1
        if any(k == 0 for k in degs):
            raise ValueError("phi must not contain constant terms")
        if any(k > d for k in degs):
            raise ValueError(f"phi has terms of degree above d={d}")
        blocks = [np.zeros((A_eta.shape[0], count_of_degree(n_z, k))) for k in range(1, d + 1)]
        for i, row in enumerate(phi):
            for alpha, c in row:
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != n_z:
                    raise ValueError(f"exponent {alpha} does not match n_z={n_z}")
                k = sum(alpha)
                idx = LiftIndex.of(n_z, k)
                pos = idx.position(alpha)
                blocks[k - 1][i, pos] += float(c) / idx.scalings[pos]
        return cls(A_eta, A_z, tuple(blocks))

    @classmethod
    def from_feedback(cls, A_eta, B, K, L_blocks, A_z) -> "CascadeSystem":
        """Closed loop of ``eta+ = A_eta eta + B u`` under ``u = K eta + L z^[1..d]``."""
        A_eta = np.atleast_2d(np.asarray(A_eta, float))
        B = np.asarray(B, float).reshape(A_eta.shape[0], -1)
        K = np.atleast_2d(np.asarray(K, float))
        Ls = [np.atleast_2d(np.asarray(L, float)) for L in L_blocks]
        return cls(A_eta + B @ K, A_z, tuple(B @ L for L in Ls))

    def phi(self, z) -> np.ndarray:
        return lift_vector_graded(z, self.d) @ self.F.T

    def phi_coefficients(self) -> list:
        """``phi`` as ``(exponent over z, coefficient)`` pairs per output row."""
        rows: list[list] = [[] for _ in range(self.n_eta)]
        for k, Fk in enumerate(self.F_blocks, start=1):
            idx = LiftIndex.of(self.n_z, k)
            for i in range(self.n_eta):
                for pos, alpha in enumerate(idx.exponents):
                    if Fk[i, pos] != 0.0:
                        rows[i].append((alpha, Fk[i, pos] * idx.scalings[pos]))
        return rows

    def as_system(self, name: str = "") -> NonlinearSystem:
        """The cascade as a polynomial system in ``x = (eta, z)``."""
        ne, nz = self.n_eta, self.n_z
        n = ne + nz
        unit = [tuple(int(i == j) for i in range(n)) for j in range(n)]
        table = []
        phi = self.phi_coefficients()
        for i in range(ne):
            row = [(unit[j], self.A_eta[i, j]) for j in range(ne) if self.A_eta[i, j] != 0.0]
            row += [((0,) * ne + tuple(a), c) for a, c in phi[i]]
            table.append(row)
        for i in range(nz):
            table.append([(unit[ne + j], self.A_z[i, j])
                          for j in range(nz) if self.A_z[i, j] != 0.0])
        return NonlinearSystem.polynomial(table, name=name)

    def lifted_row(self, terms) -> tuple[np.ndarray, float]:
        """Express a polynomial in ``(eta, z)`` as ``row @ T(x) + const``.

        Only terms linear in ``eta`` (without ``z``) or pure ``z`` monomials of
        degree ``<= d`` are representable.
        """
        ne, nz = self.n_eta, self.n_z
        row = np.zeros(ne + lifted_dim(nz, self.d))
        const = 0.0
        offsets = np.cumsum([ne] + [count_of_degree(nz, k) for k in range(1, self.d + 1)])
        for alpha, c in terms:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != ne + nz:
                raise ValueError(f"exponent {alpha} does not match state dim {ne + nz}")
            a_eta, a_z = alpha[:ne], alpha[ne:]
            de, dz = sum(a_eta), sum(a_z)
            if de == 0 and dz == 0:
                const += float(c)
            elif de == 1 and dz == 0:
                row[a_eta.index(1)] += float(c)
            elif de == 0 and dz <= self.d:
                idx = LiftIndex.of(nz, dz)
                pos = idx.position(a_z)
                row[offsets[dz - 1] + pos] += float(c) / idx.scalings[pos]
            else:
                raise ValueError(f"term {alpha} is not linear in the lifted coordinates")
        return row, const


def build_cascade_immersion(cs: CascadeSystem) -> LiftedModel:
    """Exact lifted model with ``T(eta, z) = (eta, z^[1..d])``."""
    Az = lift_matrix_graded(cs.A_z, cs.d)
    mz = Az.shape[0]
    A = np.block([[cs.A_eta, cs.F], [np.zeros((mz, cs.n_eta)), Az]])
    m = A.shape[0]
    n = cs.dim
    C = np.zeros((n, m))
    C[:, :n] = np.eye(n)
    return LiftedModel(A, C, np.zeros((m, n)), None, None, MismatchSet.zero(m),
                       exact=True, cascade=(cs.n_eta, cs.n_z, cs.d))
