"""Approximate immersion of ``x+ = f(x)`` into a lifted linear system.

The transformation is ``T(x) = P^+ F_M(x)``, where ``F_M`` stacks the first
``M`` iterates of ``f``.  The last iterate is regressed on the previous ones:
``f^{M+1}(x) ~ sum_l gamma_l f^l(x)``.  That regression defines the companion
matrix ``Gamma(gamma)`` and the lifted triple

    A = P^+ Gamma P,    C = [I 0] P,    B = P^+ [0; I].
"""

from __future__ import annotations

import io
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import geometry
from .dynamics import NonlinearSystem, SampleSet, stack_F
from .geometry import MismatchSet

logger = logging.getLogger(__name__)


class InsufficientSampleError(ValueError):
    """Too few sample points survive the regression-domain filter."""


class RankError(np.linalg.LinAlgError):
    """Basis matrix is not of full column rank."""


@dataclass(frozen=True)
class LiftedModel:
    """Lifted linear system ``xi+ = A xi`` with output ``x = C xi``.

    Attributes
    ----------
    A, C, B : ndarray
        Shapes ``(m, m)``, ``(n, m)`` and ``(m, n)``.
    M : int or None
        Number of stacked iterates; ``None`` for cascade models.
    P : ndarray or None
        ``((M+1) n, m)`` basis with ``T(x) = P^+ F_M(x)``.
    mismatch : MismatchSet
        Residual set ``Delta`` in the lifted space.
    exact : bool
    gamma : tuple of ndarray
        Regression blocks ``gamma_0 .. gamma_M`` (empty for cascade models).
    delta_hat : float
        Sampled residual bound.
    sigma_ratio : float
        Smallest over largest singular value of the stacked data matrix
        retained in ``P``; a quality measure for linear independence.
    cascade : tuple or None
        ``(n_eta, n_z, d)`` when ``T(eta, z) = (eta, z^[1..d])``.
    """

    A: np.ndarray
    C: np.ndarray
    B: np.ndarray
    M: int | None
    P: np.ndarray | None
    mismatch: MismatchSet
    exact: bool = False
    gamma: tuple = ()
    delta_hat: float = 0.0
    sigma_ratio: float = 1.0
    cascade: tuple | None = None
    P_pinv: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.P is not None and self.P_pinv is None:
            object.__setattr__(self, "P_pinv", np.linalg.pinv(self.P))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def transform(self, sys: NonlinearSystem | None, x, check: bool = True) -> np.ndarray:
        """``T(x)`` for one state or a batch."""
        x = np.asarray(x, float)
        if self.cascade is not None:
            from .lifting import lift_vector_graded
            n_eta, n_z, d = self.cascade
            eta, z = x[..., :n_eta], x[..., n_eta:n_eta + n_z]
            return np.concatenate([eta, lift_vector_graded(z, d)], axis=-1)
        if sys is None:
            raise ValueError("a system is required to evaluate the stacked transform")
        return stack_F(sys, x, self.M, check=check) @ self.P_pinv.T

    def residual(self, sys: NonlinearSystem, x) -> np.ndarray:
        """``T(f(x)) - A T(x)`` for a batch of states."""
        x = np.atleast_2d(np.asarray(x, float))
        return self.transform(sys, sys.eval(x)) - self.transform(sys, x) @ self.A.T


@dataclass(frozen=True)
class GammaFit:
    """Result of a regression at horizon ``M``."""

    M: int
    gamma: tuple
    residuals: np.ndarray
    delta_hat: float
    ridge: float
    n_points: int
    method: str = "lstsq"

    @property
    def gamma_stack(self) -> np.ndarray:
        return np.hstack(self.gamma)


def regression_data(sample: SampleSet, M: int, nested: bool = False):
    """Data matrices ``(Phi, Y)`` with rows ``F_M(x)`` and ``f^{M+1}(x)``.

    With ``nested=True`` every trajectory point ``f^j(x)`` whose continuation
    stays in the region for ``M + 1`` more steps is used, not just the initial
    points.  That set is closed under ``f`` by construction, which is what
    makes sampled residual bounds comparable across ``M``.
    """
    n = sample.dim
    if M + 1 > sample.horizon:
        raise InsufficientSampleError(f"horizon {sample.horizon} too short for M={M}")
    starts = range(sample.horizon - M) if nested else (0,)
    Phi, Y = [], []
    for j in starts:
        mask = sample.violation_index >= j + M + 2
        tr = sample.trajectories[mask, j:j + M + 2]
        Phi.append(tr[:, :M + 1].reshape(-1, (M + 1) * n))
        Y.append(tr[:, M + 1])
    return np.vstack(Phi), np.vstack(Y)


def _split_gamma(G: np.ndarray, n: int) -> tuple:
    return tuple(G[:, l * n:(l + 1) * n].copy() for l in range(G.shape[1] // n))


def default_ridge(Phi: np.ndarray) -> float:
    return 1e-8 * float(np.sum(Phi * Phi)) / max(Phi.shape[1], 1)


def fit_gamma(sample: SampleSet, M: int, ridge: float | None = None,
              nested: bool = False) -> GammaFit:
    """Ridge least-squares fit of ``f^{M+1}`` on ``F_M`` over ``O_{M+1}``.

    Parameters
    ----------
    ridge : float, optional
        Tikhonov weight; ``None`` selects ``1e-8 * trace(Gram) / columns``.

    Raises
    ------
    InsufficientSampleError
        Fewer than ``(M+1) n`` usable points.
    """
    n = sample.dim
    Phi, Y = regression_data(sample, M, nested)
    cols = (M + 1) * n
    if Phi.shape[0] < cols:
        raise InsufficientSampleError(
            f"{Phi.shape[0]} usable points for M={M}; need at least {cols}")
    lam = default_ridge(Phi) if ridge is None else float(ridge)
    # augmented least squares is the numerically stable form of the normal equations
    Phi_aug = np.vstack([Phi, np.sqrt(lam) * np.eye(cols)]) if lam > 0 else Phi
    Y_aug = np.vstack([Y, np.zeros((cols, n))]) if lam > 0 else Y
    sol, _, rank, _ = np.linalg.lstsq(Phi_aug, Y_aug, rcond=None)
    if rank < cols:
        warnings.warn(f"regression Gram matrix is rank deficient at M={M} "
                      f"(rank {rank} < {cols})", RuntimeWarning, stacklevel=2)
    G = sol.T
    res = np.max(np.abs(Y - Phi @ G.T), axis=1)
    return GammaFit(M, _split_gamma(G, n), res, float(res.max()), lam, Phi.shape[0])


def fit_gamma_minimax(sample: SampleSet, M: int, nested: bool = False) -> GammaFit:
    """Fit minimizing the worst-case ``inf``-norm residual, one LP per output."""
    n = sample.dim
    Phi, Y = regression_data(sample, M, nested)
    N, cols = Phi.shape
    if N < cols:
        raise InsufficientSampleError(f"{N} usable points for M={M}; need at least {cols}")
    G = np.zeros((n, cols))
    c = np.zeros(cols + 1)
    c[-1] = 1.0
    A_ub = np.block([[Phi, -np.ones((N, 1))], [-Phi, -np.ones((N, 1))]])
    bounds = [(None, None)] * cols + [(0, None)]
    for i in range(n):
        b_ub = np.concatenate([Y[:, i], -Y[:, i]])
        r = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if r.status != 0:
            raise np.linalg.LinAlgError(f"minimax fit failed: {r.message}")
        G[i] = r.x[:cols]
    res = np.max(np.abs(Y - Phi @ G.T), axis=1)
    return GammaFit(M, _split_gamma(G, n), res, float(res.max()), 0.0, N, "minimax")


def _as_stack(gamma) -> np.ndarray:
    if isinstance(gamma, GammaFit):
        return gamma.gamma_stack
    if isinstance(gamma, np.ndarray):
        return gamma
    return np.hstack([np.asarray(g, float) for g in gamma])


def mismatch_bound(sample: SampleSet, gamma, M: int) -> float:
    """``max ||f^{M+1}(x) - sum_l gamma_l f^l(x)||_inf`` over ``x`` in ``O_{M+1}``."""
    Phi, Y = regression_data(sample, M)
    if Phi.shape[0] == 0:
        raise InsufficientSampleError(f"no sample points in O_{M + 1}")
    G = _as_stack(gamma)
    return float(np.max(np.abs(Y - Phi @ G.T)))


def nested_mismatch(sample: SampleSet, gamma, M: int) -> float:
    """Residual bound over the trajectory-closed sample (see ``regression_data``)."""
    Phi, Y = regression_data(sample, M, nested=True)
    if Phi.shape[0] == 0:
        raise InsufficientSampleError(f"no sample points in O_{M + 1}")
    G = _as_stack(gamma)
    return float(np.max(np.abs(Y - Phi @ G.T)))


def embedded_delta_curve(sample: SampleSet, M_max: int, ridge: float | None = None) -> dict:
    """Nested residual bounds that never increase with ``M``.

    At each ``M`` the better of the fresh fit and the embedded level-``M-1``
    candidate is kept, both measured by ``nested_mismatch``.

    Returns
    -------
    dict
        ``M -> (delta_hat, gamma)``.
    """
    out: dict = {}
    prev = None
    for M in range(M_max + 1):
        fit = fit_gamma(sample, M, ridge, nested=True)
        best = (nested_mismatch(sample, fit.gamma, M), fit.gamma)
        if prev is not None:
            cand = embed_gamma(prev)
            d = nested_mismatch(sample, cand, M)
            if d < best[0]:
                best = (d, cand)
        out[M] = best
        prev = best[1]
    return out


def embed_gamma(gamma) -> tuple:
    """Turn a level-``M`` fit into a feasible level-``M+1`` candidate.

    ``f^{M+2} - sum_l gamma_l f^{l+1}`` is the level-``M`` residual at ``f(x)``,
    so prepending a zero block keeps the bound.
    """
    G = _as_stack(gamma)
    n = G.shape[0]
    return _split_gamma(np.hstack([np.zeros((n, n)), G]), n)


def companion(gamma) -> np.ndarray:
    """Block companion matrix with identity superdiagonal and last block row gamma."""
    G = _as_stack(gamma)
    n, cols = G.shape
    out = np.zeros((cols, cols))
    out[:cols - n, n:] = np.eye(cols - n)
    out[cols - n:] = G
    return out


def data_matrix(sample: SampleSet, M: int) -> np.ndarray:
    return regression_data(sample, M)[0]


def reduce_basis(sample: SampleSet, M: int, rank_tol: float | None = None):
    """Orthonormal basis ``P`` of the span of ``F_M`` over the regression domain.

    Returns
    -------
    P : ndarray, shape ((M+1) n, m)
        Identity when no dependence is detected.
    m : int
    sigma_ratio : float
        Smallest retained over largest singular value.
    """
    Phi = data_matrix(sample, M)
    cols = Phi.shape[1]
    if Phi.shape[0] == 0:
        raise InsufficientSampleError("empty sample")
    _, s, Vt = np.linalg.svd(Phi, full_matrices=False)
    tol = 1e-8 * s[0] if rank_tol is None else float(rank_tol)
    r = int(np.sum(s > tol))
    if r == cols:
        return np.eye(cols), cols, float(s[-1] / s[0])
    logger.info("basis reduced from %d to %d coordinates at M=%d", cols, r, M)
    return Vt[:r].T.copy(), r, float(s[r - 1] / s[0])


def assemble(gamma, P: np.ndarray, delta_hat: float, ball_radius: float = 0.0,
             sigma_ratio: float = 1.0, exact: bool | None = None) -> LiftedModel:
    """Lifted triple ``(A, C, B)`` and mismatch set from a fit and a basis.

    Raises
    ------
    RankError
        If ``P`` does not have full column rank.
    """
    G = _as_stack(gamma)
    n, cols = G.shape
    P = np.asarray(P, float)
    if P.shape[0] != cols:
        raise ValueError(f"P has {P.shape[0]} rows, expected {cols}")
    if np.linalg.matrix_rank(P) < P.shape[1]:
        raise RankError("P must have full column rank")
    Pp = np.linalg.pinv(P)
    Gam = companion(G)
    A = Pp @ Gam @ P
    C = P[:n]
    E = np.zeros((cols, n))
    E[cols - n:] = np.eye(n)
    B = Pp @ E
    if exact is None:
        exact = delta_hat == 0.0 and ball_radius == 0.0
    mm = MismatchSet(B, 0.0 if exact else delta_hat, 0.0 if exact else ball_radius)
    return LiftedModel(A, C, B, cols // n - 1, P, mm, bool(exact), _split_gamma(G, n),
                       float(delta_hat), float(sigma_ratio), None, Pp)


def lipschitz_transform(M: int, L_f: float, P: np.ndarray | None = None) -> float:
    """Conservative Lipschitz constant of ``T = P^+ F_M`` given ``L_f``."""
    base = np.sqrt(M + 1) * max(1.0, L_f ** M)
    if P is None:
        return float(base)
    return float(base * np.linalg.norm(np.linalg.pinv(P), 2))


def inflate_for_covering(delta_hat: float, L_T: float, L_f: float, A_norm: float,
                         eps: float, B_map: np.ndarray) -> MismatchSet:
    """Mismatch set valid on all of ``O_{M+1}`` from a bound on an eps-covering."""
    for name, v in (("delta_hat", delta_hat), ("L_T", L_T), ("L_f", L_f),
                    ("A_norm", A_norm), ("eps", eps)):
        if v < 0:
            raise ValueError(f"{name} must be nonnegative")
    return MismatchSet(B_map, delta_hat, L_T * (L_f + A_norm) * eps)


def observability_rank(C: np.ndarray, A: np.ndarray, tol: float | None = None) -> int:
    m = A.shape[0]
    blocks, Ak = [], np.eye(m)
    for _ in range(m):
        blocks.append(C @ Ak)
        Ak = A @ Ak
    return int(np.linalg.matrix_rank(np.vstack(blocks), tol=tol))


def observability_index(C: np.ndarray, A: np.ndarray, tol: float | None = None) -> int | None:
    """Smallest ``M`` with ``[C; CA; ...; CA^M]`` of full column rank, or None."""
    m = A.shape[0]
    blocks, Ak = [], np.eye(m)
    for M in range(m):
        blocks.append(C @ Ak)
        if np.linalg.matrix_rank(np.vstack(blocks), tol=tol) == m:
            return M
        Ak = A @ Ak
    return None


# ---------------------------------------------------------------- persistence

def _matrix_block(name: str, X: np.ndarray) -> str:
    X = np.atleast_2d(np.asarray(X, float))
    lines = [f"[{name}]", f"{X.shape[0]} {X.shape[1]}"]
    if X.shape[1]:
        lines += [" ".join(repr(float(v)) for v in row) for row in X]
    return "\n".join(lines)


def model_to_text(model: LiftedModel) -> str:
    meta = {
        "M": model.M if model.M is not None else "none",
        "m": model.m,
        "n": model.n,
        "exact": str(model.exact).lower(),
        "delta_hat": repr(float(model.delta_hat)),
        "mismatch_delta": repr(float(model.mismatch.delta)),
        "mismatch_ball": repr(float(model.mismatch.ball_radius)),
        "sigma_ratio": repr(float(model.sigma_ratio)),
    }
    if model.cascade is not None:
        meta["cascade"] = " ".join(str(v) for v in model.cascade)
    parts = ["# lifted linear model"] + [f"# {k}: {v}" for k, v in meta.items()]
    parts += [_matrix_block("A", model.A), _matrix_block("C", model.C),
              _matrix_block("B", model.B),
              _matrix_block("mismatch_B", model.mismatch.B_map)]
    if model.P is not None:
        parts.append(_matrix_block("P", model.P))
    if model.gamma:
        parts.append(_matrix_block("gamma", np.hstack(model.gamma)))
    return "\n".join(parts) + "\n"


def model_from_text(text: str) -> LiftedModel:
    meta = geometry.read_header(text)
    blocks: dict[str, np.ndarray] = {}
    lines = [ln.strip() for ln in io.StringIO(text) if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        name = lines[i].strip("[]")
        r, c = (int(v) for v in lines[i + 1].split())
        if c == 0:
            blocks[name] = np.zeros((r, 0))
            i += 2
            continue
        rows = [[float(v) for v in lines[i + 2 + k].split()] for k in range(r)]
        blocks[name] = np.array(rows, float).reshape(r, c)
        i += 2 + r
    n = int(meta["n"])
    M = None if meta["M"] == "none" else int(meta["M"])
    cascade = tuple(int(v) for v in meta["cascade"].split()) if "cascade" in meta else None
    mm = MismatchSet(blocks["mismatch_B"], float(meta["mismatch_delta"]),
                     float(meta["mismatch_ball"]))
    gamma = _split_gamma(blocks["gamma"], n) if "gamma" in blocks else ()
    return LiftedModel(blocks["A"], blocks["C"], blocks["B"], M, blocks.get("P"), mm,
                       meta["exact"] == "true", gamma, float(meta["delta_hat"]),
                       float(meta["sigma_ratio"]), cascade)
