"""Verification of the standing assumptions for polynomial-quadratic systems

    x+ = f(x) = (A + Abar(x)) x,     grad f(x) affine in x.

Norms of matrices affine in ``x`` are convex, so their maxima over a polytope
are attained at vertices.  The convex hull of ``(A + Abar(v)) w`` over vertex
pairs ``(v, w)`` over-approximates the one-step image of a polytope, and a
chain of such hulls gives contraction and Lipschitz factor products.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .dynamics import NonlinearSystem
from .geometry import Polytope

logger = logging.getLogger(__name__)

PASS, FAIL, NOT_CHECKED = "pass", "fail", "not-checked"


class CertificationError(ValueError):
    """System lacks the structure a certificate needs."""


def polytope_vertices(P: Polytope) -> np.ndarray:
    """Vertices of a bounded 1-D or 2-D polytope."""
    if P.dim == 1:
        lo, hi = geometry.bounding_box(P)
        return np.array([[lo[0]], [hi[0]]]) if hi[0] > lo[0] else np.array([lo])
    if P.dim == 2:
        return geometry.vertices_2d(P)
    raise geometry.DimensionError(f"vertex enumeration unsupported for dim {P.dim}")


def _hull(points: np.ndarray) -> tuple[Polytope, np.ndarray]:
    if points.shape[1] == 1:
        lo, hi = points.min(), points.max()
        V = np.array([[lo], [hi]]) if hi > lo else np.array([[lo]])
        return Polytope.box([lo], [hi]), V
    return geometry.hull_2d(points)


def _as_vertices(Z) -> np.ndarray:
    if isinstance(Z, Polytope):
        return polytope_vertices(Z)
    return np.atleast_2d(np.asarray(Z, float))


def lipschitz_vertex(sys: NonlinearSystem, P) -> float:
    """``max ||grad f(v)||_2`` over the vertices of ``P``."""
    if sys.affine_gradient is None:
        raise CertificationError("system has no affine gradient")
    V = _as_vertices(P)
    return float(max(np.linalg.norm(sys.gradient(v), 2) for v in V))


def contraction_factor(sys: NonlinearSystem, P) -> float:
    """``max ||A + Abar(v)||_2`` over the vertices of ``P``."""
    if sys.factored is None:
        raise CertificationError("system has no factored form")
    V = _as_vertices(P)
    return float(max(np.linalg.norm(sys.factor_matrix(v), 2) for v in V))


def reach_overapprox(sys: NonlinearSystem, Z) -> tuple[Polytope, np.ndarray]:
    """Convex hull of ``(A + Abar(v)) w`` over all vertex pairs of ``Z``.

    ``Z`` may be a polytope or an explicit vertex array.
    """
    if sys.factored is None:
        raise CertificationError("system has no factored form")
    V = _as_vertices(Z)
    if V.shape[1] > 2:
        raise geometry.DimensionError("reach over-approximation needs dim <= 2")
    imgs = np.array([sys.factor_matrix(v) @ w for v in V for w in V])
    return _hull(imgs)


@dataclass
class AssumptionReport:
    """Outcome of the assumption checks.

    ``a3_constant`` and ``a3_rate`` give ``||f^t(x)|| <= c * lam^t * ||x||``;
    ``a4_constant`` bounds ``||f^t(x) - f^t(y)|| / ||x - y||`` for all ``t``.
    """

    L_f: float | None
    reach_chain: list = field(default_factory=list)
    chain_vertices: list = field(default_factory=list)
    contained_in_previous: list = field(default_factory=list)
    contained_in_X: list = field(default_factory=list)
    reentry_index: int | None = None
    rho_factors: list = field(default_factory=list)
    lip_factors: list = field(default_factory=list)
    a3_constant: float | None = None
    a3_rate: float | None = None
    a4_constant: float | None = None
    a4_rate: float | None = None
    L_f_inflated: float | None = None
    rho: float | None = None
    factored_residual: float | None = None
    verdicts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        def f(v):
            return None if v is None else float(v)
        return {
            "L_f": f(self.L_f),
            "L_f_inflated": f(self.L_f_inflated),
            "rho": f(self.rho),
            "reentry_index": self.reentry_index,
            "chain_length": len(self.reach_chain),
            "chain_vertex_counts": [int(len(V)) for V in self.chain_vertices],
            "contained_in_previous": [bool(b) for b in self.contained_in_previous],
            "contained_in_X": [bool(b) for b in self.contained_in_X],
            "rho_factors": [float(v) for v in self.rho_factors],
            "lip_factors": [float(v) for v in self.lip_factors],
            "a3_constant": f(self.a3_constant),
            "a3_rate": f(self.a3_rate),
            "a4_constant": f(self.a4_constant),
            "a4_rate": f(self.a4_rate),
            "factored_residual": f(self.factored_residual),
            "verdicts": dict(self.verdicts),
        }

    def render(self) -> str:
        buf = io.StringIO()
        w = buf.write
        w("Assumption report\n=================\n")
        for k in ("A1", "A2", "A3", "A4"):
            w(f"{k}: {self.verdicts.get(k, NOT_CHECKED)}\n")
        w("\n")
        if self.L_f is not None:
            w(f"L_f over X: {self.L_f:.6f}\n")
        if self.L_f_inflated is not None:
            w(f"L_f over X + rho B (rho = {self.rho:.6g}): {self.L_f_inflated:.6f}\n")
        if self.factored_residual is not None:
            w(f"factored form residual on random points: {self.factored_residual:.3e}\n")
        if self.reach_chain:
            w("\nreach chain\n")
            w(" i  vertices  in_prev  in_X   rho(R_i)   lip(R_i)\n")
            for i, V in enumerate(self.chain_vertices):
                prev = "-" if i == 0 else ("yes" if self.contained_in_previous[i] else "no")
                inx = "yes" if self.contained_in_X[i] else "no"
                rf = f"{self.rho_factors[i]:.6f}" if i < len(self.rho_factors) else "-"
                lf = f"{self.lip_factors[i]:.6f}" if i < len(self.lip_factors) else "-"
                w(f"{i:2d}  {len(V):8d}  {prev:>7}  {inx:>4}  {rf:>9}  {lf:>9}\n")
        if self.reentry_index is not None:
            j = self.reentry_index
            w(f"\nfirst j with R_(j+1) in R_j in X: {j}\n")
        if self.a3_rate is not None:
            w(f"||f^t(x)|| <= {self.a3_constant:.6f} * {self.a3_rate:.6f}^t ||x||\n")
        if self.a4_rate is not None:
            w(f"||f^t(x) - f^t(y)|| <= {self.a4_constant:.6f} ||x - y||"
              f" (asymptotic rate {self.a4_rate:.6f})\n")
        return buf.getvalue()


def _envelope(factors, j: int, rate: float) -> float:
    """``max_{t <= j} prod_{i<t} factors[i] / rate^t``."""
    best, prod = 1.0, 1.0
    for t in range(1, j + 1):
        prod *= factors[t - 1]
        best = max(best, prod / rate ** t)
    return best


def certify(sys: NonlinearSystem, X: Polytope, rho: float | None = None, K: int = 20,
            max_vertices: int = 2000, seed=0, tol: float = geometry.ABS_TOL) -> AssumptionReport:
    """Run the vertex-based checks of the four standing assumptions.

    A1 uses the vertex Lipschitz bound.  A2 holds once the reach chain
    re-enters itself inside ``X``.  A3 and A4 follow from the factor products
    along the chain when the factor at the re-entry set is below one.
    """
    rep = AssumptionReport(L_f=None, rho=rho)
    verdicts = {k: NOT_CHECKED for k in ("A1", "A2", "A3", "A4")}
    rep.verdicts = verdicts
    if sys.affine_gradient is not None:
        rep.L_f = lipschitz_vertex(sys, X)
        verdicts["A1"] = PASS if np.isfinite(rep.L_f) else FAIL
        if rho:
            from .sampling import inflate_region
            rep.L_f_inflated = lipschitz_vertex(sys, inflate_region(X, rho))
    if sys.factored is None:
        return rep

    from .sampling import random_points
    probe = random_points(X, 200, seed)
    rep.factored_residual = sys.check_factored(probe)
    if rep.factored_residual > 1e-9 * max(1.0, float(np.abs(probe).max()) ** 2):
        logger.warning("factored form deviates from f by %.3e", rep.factored_residual)

    R, V = X, polytope_vertices(X)
    chain, verts = [R], [V]
    in_prev, in_X = [True], [True]
    j = None
    for i in range(K):
        R_next, V_next = reach_overapprox(sys, V)
        chain.append(R_next)
        verts.append(V_next)
        in_prev.append(geometry.is_subset(R_next, R, tol))
        in_X.append(geometry.is_subset(R_next, X, tol))
        if in_prev[-1] and in_X[-2]:
            j = i
            break
        if len(V_next) > max_vertices:
            logger.warning("reach chain stopped: %d vertices at step %d", len(V_next), i + 1)
            break
        R, V = R_next, V_next
    rep.reach_chain, rep.chain_vertices = chain, verts
    rep.contained_in_previous, rep.contained_in_X = in_prev, in_X

    if j is None:
        verdicts["A2"] = FAIL
        return rep
    rep.reentry_index = j
    verdicts["A2"] = PASS
    rep.rho_factors = [contraction_factor(sys, verts[i]) for i in range(j + 1)]
    lam = rep.rho_factors[j]
    if lam < 1.0:
        rep.a3_rate = lam
        rep.a3_constant = _envelope(rep.rho_factors, j, lam)
        verdicts["A3"] = PASS
    else:
        verdicts["A3"] = FAIL
    if sys.affine_gradient is not None:
        rep.lip_factors = [lipschitz_vertex(sys, verts[i]) for i in range(j + 1)]
        mu = rep.lip_factors[j]
        if mu < 1.0:
            rep.a4_rate = mu
            rep.a4_constant = _envelope(rep.lip_factors, j, 1.0)
            verdicts["A4"] = PASS
        else:
            verdicts["A4"] = FAIL
    return rep


def chain_to_csv(V: np.ndarray) -> str:
    V = np.atleast_2d(np.asarray(V, float))
    if V.shape[1] == 2:
        return geometry.vertices_to_csv(V)
    return "x1\n" + "".join(f"{float(v[0])!r}\n" for v in V)
