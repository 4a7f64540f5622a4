"""Invariant-set fixed-point iterations.

In state space the iteration ``O_{k+1} = O_k cap f^{-1}(O_k)`` is only
evaluated on samples.  In the lifted space it becomes the polyhedral recursion

    Omega = {xi : C A^k xi in X (-) sum_{l<k} C A^l Delta,  k = 0, 1, ...}

which is run until every new row is redundant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .dynamics import NonlinearSystem, SampleSet
from .geometry import MismatchSet, Polytope
from .immersion import LiftedModel, assemble, fit_gamma, fit_gamma_minimax, reduce_basis

logger = logging.getLogger(__name__)


class HorizonError(ValueError):
    """Requested step exceeds the sample horizon."""


class ExhaustionError(RuntimeError):
    """The search over ``M`` passed ``M_max`` without a nonempty invariant set."""

    def __init__(self, message: str, delta_schedule=(), delta_curve=None):
        super().__init__(message)
        self.delta_schedule = list(delta_schedule)
        self.delta_curve = dict(delta_curve or {})


@dataclass
class InvariantResult:
    """Lifted invariant set and how it was obtained.

    Attributes
    ----------
    omega : Polytope
    k_star : int
        Last step that contributed a non-redundant row; ``k_max`` when the
        iteration was truncated.
    finitely_determined : bool
    empty : bool
    model : LiftedModel or None
    tightening_trace : list of ndarray
        Accumulated support offsets subtracted from the constraint rows at
        each step ``k``.
    """

    omega: Polytope
    k_star: int
    finitely_determined: bool
    empty: bool
    model: LiftedModel | None = None
    tightening_trace: list = field(default_factory=list)
    n_lp: int = 0

    def metadata(self) -> dict:
        out = {
            "k_star": self.k_star,
            "finitely_determined": self.finitely_determined,
            "empty": self.empty,
            "rows": self.omega.n_rows,
            "lifted_dim": self.omega.dim,
        }
        if self.model is not None:
            out["M"] = self.model.M if self.model.M is not None else "none"
            out["delta_hat"] = float(self.model.delta_hat)
            out["exact"] = bool(self.model.exact)
        return out


def nonlinear_Ok_membership(sample: SampleSet, k: int) -> np.ndarray:
    """Mask of sample points whose first ``k`` iterates stay in the region."""
    if k > sample.horizon:
        raise HorizonError(f"k={k} exceeds sample horizon {sample.horizon}")
    return sample.violation_index > k


def tightened_mais(A, C, X: Polytope, mismatch: MismatchSet | None = None,
                   k_max: int = 200, extra=(), tol: float = geometry.ABS_TOL,
                   model: LiftedModel | None = None,
                   prune: bool = True) -> InvariantResult:
    """Robust maximal admissible invariant set of ``xi+ = A xi + Delta``.

    Parameters
    ----------
    A, C : ndarray
        Lifted dynamics and the output map whose image is constrained to ``X``.
    X : Polytope
        Constraint set in output coordinates.
    mismatch : MismatchSet, optional
        Additive set ``Delta`` in the lifted space; zero when omitted.
    extra : sequence of MismatchSet
        Further additive sets summed into ``Delta``.
    k_max : int
        Step budget; reaching it flags the result as not finitely determined.

    Notes
    -----
    A new row is redundant when its maximum over the current polytope is at
    most its offset plus ``tol``.  Only non-redundant rows are appended.
    """
    A = np.atleast_2d(np.asarray(A, float))
    C = np.atleast_2d(np.asarray(C, float))
    m = A.shape[0]
    if A.shape != (m, m) or C.shape[1] != m:
        raise geometry.DimensionError(f"inconsistent shapes A{A.shape}, C{C.shape}")
    if C.shape[0] != X.dim:
        raise geometry.DimensionError(f"C has {C.shape[0]} outputs, X has dim {X.dim}")
    sets = [s for s in ([mismatch] if mismatch is not None else []) + list(extra)
            if not s.is_zero]
    for s in sets:
        if s.dim != m:
            raise geometry.DimensionError(f"mismatch set dim {s.dim} != lifted dim {m}")

    HX, hX = X.H, X.h
    G = C.copy()
    acc = np.zeros(X.n_rows)
    H_rows = [HX @ G]
    h_rows = [hX.copy()]
    trace = [acc.copy()]
    n_lp = 0

    def _finish(H, h, k_star, fd, empty):
        omega = Polytope(np.vstack(H), np.concatenate(h))
        if not empty and prune:
            try:
                omega = geometry.remove_redundancy(omega, tol)
            except geometry.EmptyPolytopeError:
                empty = True
        if not empty:
            empty = geometry.is_empty(omega, tol)
        return InvariantResult(omega, k_star, fd, bool(empty), model, trace, n_lp)

    # the k = 0 rows alone may already be empty
    if geometry.is_empty(Polytope(H_rows[0], h_rows[0]), tol):
        return _finish(H_rows, h_rows, 0, True, True)

    for k in range(1, k_max + 1):
        for s in sets:
            acc = acc + s.support_many(HX @ G)
        G = G @ A
        trace.append(acc.copy())
        rows = HX @ G
        offs = hX - acc
        H_cur = np.vstack(H_rows)
        h_cur = np.concatenate(h_rows)
        keep = []
        for i in range(rows.shape[0]):
            if not np.any(rows[i]):
                if offs[i] < -tol:
                    return _finish(H_rows + [rows[i:i + 1]], h_rows + [offs[i:i + 1]],
                                   k, True, True)
                continue
            status, val, _ = geometry._lp_max(rows[i], H_cur, h_cur)
            n_lp += 1
            if status == "infeasible":
                return _finish(H_rows, h_rows, k - 1, True, True)
            if status == "unbounded" or val > offs[i] + tol:
                keep.append(i)
        if not keep:
            logger.debug("fixed point reached after %d steps", k - 1)
            return _finish(H_rows, h_rows, k - 1, True, False)
        H_rows.append(rows[keep])
        h_rows.append(offs[keep])
    logger.info("step budget k_max=%d exhausted", k_max)
    return _finish(H_rows, h_rows, k_max, False, False)


def linear_mais(A, C, X: Polytope, k_max: int = 200,
                tol: float = geometry.ABS_TOL) -> InvariantResult:
    """Maximal admissible invariant set of ``xi+ = A xi`` under ``C xi in X``."""
    return tightened_mais(A, C, X, None, k_max=k_max, tol=tol)


def model_mais(model: LiftedModel, X: Polytope, k_max: int = 200, extra=(),
               output_map: np.ndarray | None = None,
               tol: float = geometry.ABS_TOL) -> InvariantResult:
    """``tightened_mais`` with the model's own mismatch set.

    ``output_map`` replaces ``model.C`` when constraints act on further
    linear functionals of the lifted state (``X`` must match its rows).
    """
    C = model.C if output_map is None else output_map
    return tightened_mais(model.A, C, X, model.mismatch, k_max, extra, tol, model)


def disturbance_gain(M: int, L_f: float) -> float:
    """``sum_{l<=M} L_f^l``, the growth of a state disturbance over ``F_M``."""
    if L_f < 0:
        raise ValueError("L_f must be nonnegative")
    if abs(L_f - 1.0) < 1e-12:
        return float(M + 1)
    return float((L_f ** (M + 1) - 1.0) / (L_f - 1.0))


def disturbance_set(model: LiftedModel, L_f: float, radius: float) -> MismatchSet:
    """Euclidean ball in the lifted space covering a disturbance of norm ``radius``."""
    M = 0 if model.M is None else model.M
    return MismatchSet.ball(model.m, disturbance_gain(M, L_f) * radius)


def preimage_contains(model: LiftedModel, sys: NonlinearSystem | None, omega: Polytope,
                      x, tol: float = geometry.ABS_TOL):
    """Whether ``T(x)`` lies in ``omega``; vectorized over a batch of states.

    Non-finite lifted values count as outside.
    """
    x = np.asarray(x, float)
    with np.errstate(over="ignore", invalid="ignore"):
        xi = model.transform(sys, x, check=False)
        finite = np.all(np.isfinite(xi), axis=-1)
        inside = np.all(xi @ omega.H.T <= omega.h + tol, axis=-1)
    out = inside & finite
    return bool(out) if np.ndim(out) == 0 else out


@dataclass
class Algorithm1Result:
    M: int
    result: InvariantResult
    model: LiftedModel
    delta_curve: dict
    delta_schedule: list
    basis_dims: dict


def run_algorithm1(sys: NonlinearSystem, X: Polytope, delta_target: float,
                   sample: SampleSet, M_max: int = 10, ridge: float | None = None,
                   rank_tol: float | None = None, k_max: int = 200,
                   ball_radius: float = 0.0, tol: float = geometry.ABS_TOL,
                   method: str = "lstsq") -> Algorithm1Result:
    """Increase ``M`` until the fit is below ``delta_target`` and the lifted
    invariant set is nonempty; the threshold is halved whenever it is empty.

    ``method`` selects the ridge least-squares (``"lstsq"``) or the worst-case
    (``"minimax"``) fit of the companion map.

    Raises
    ------
    ExhaustionError
        If ``M`` would exceed ``M_max``.
    """
    if delta_target <= 0:
        raise ValueError("delta_target must be positive")
    if method not in ("lstsq", "minimax"):
        raise ValueError(f"unknown fit method {method!r}")
    if sample.horizon <= M_max:
        raise ValueError(f"t_f={sample.horizon} must exceed M_max={M_max}")
    delta = float(delta_target)
    schedule = [delta]
    curve: dict[int, float] = {}
    dims: dict[int, int] = {}
    for M in range(M_max + 1):
        fit = fit_gamma(sample, M, ridge) if method == "lstsq" else fit_gamma_minimax(sample, M)
        curve[M] = fit.delta_hat
        logger.info("M=%d delta_hat=%.4g (threshold %.4g)", M, fit.delta_hat, delta)
        if not fit.delta_hat < delta:
            continue
        P, m, ratio = reduce_basis(sample, M, rank_tol)
        dims[M] = m
        model = assemble(fit.gamma, P, fit.delta_hat, ball_radius, ratio)
        res = model_mais(model, X, k_max, tol=tol)
        if not res.empty:
            return Algorithm1Result(M, res, model, curve, schedule, dims)
        delta /= 2.0
        schedule.append(delta)
        logger.info("empty invariant set at M=%d; threshold reduced to %.4g", M, delta)
    raise ExhaustionError(f"no nonempty invariant set for M <= {M_max}", schedule, curve)


def output_bounds(model: LiftedModel, omega: Polytope) -> tuple[np.ndarray, np.ndarray]:
    """Box containing ``C omega``, hence every state in the preimage."""
    lo = np.empty(model.n)
    hi = np.empty(model.n)
    for i in range(model.n):
        hi[i] = geometry.support(omega, model.C[i])
        lo[i] = -geometry.support(omega, -model.C[i])
    return lo, hi


def sample_preimage(model: LiftedModel, sys: NonlinearSystem | None, omega: Polytope,
                    N: int, seed=None, prefilter=None, box=None, batch: int = 200_000,
                    max_draws: int = 50_000_000, tol: float = geometry.ABS_TOL):
    """Up to ``N`` states with ``T(x)`` in ``omega`` by rejection sampling.

    Candidates are uniform in ``box`` (default: ``output_bounds``) and can be
    screened by a cheap ``prefilter(x) -> mask`` before the full test.

    Returns
    -------
    points : ndarray, shape (k, n) with k <= N
    draws : int
        Number of candidates drawn.
    """
    rng = np.random.default_rng(seed)
    lo, hi = output_bounds(model, omega) if box is None else box
    out, got, draws = [], 0, 0
    while got < N and draws < max_draws:
        cand = rng.uniform(lo, hi, size=(batch, len(lo)))
        draws += batch
        if prefilter is not None:
            cand = cand[prefilter(cand)]
        if len(cand):
            cand = cand[preimage_contains(model, sys, omega, cand, tol)]
        out.append(cand)
        got += len(cand)
    pts = np.vstack(out) if out else np.zeros((0, len(lo)))
    return pts[:N], draws
