"""Halfspace-representation polytopes and the set operations used by the
fixed-point algorithms.

A :class:`Polytope` is the set ``{x : H x <= h}``.  A :class:`MismatchSet` is
the bounded set ``B_map @ {||w||_inf <= delta} + ball_radius * unit_ball``,
which is the only subtrahend the tightening steps ever need.

Linear programs are solved with the HiGHS backend of :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

ABS_TOL = 1e-9


class GeometryError(Exception):
    """Base class for polytope errors."""


class EmptyPolytopeError(GeometryError):
    pass


class UnboundedError(GeometryError):
    pass


class DimensionError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# LP helpers


def _lp_max(c: np.ndarray, H: np.ndarray, h: np.ndarray):
    """Maximize ``c @ x`` over ``H x <= h``.

    Returns ``(status, value, x)`` with status one of ``"optimal"``,
    ``"infeasible"``, ``"unbounded"``.

    Rows and objective are scaled to unit norm before calling the solver, so
    nearly vanishing directions (such as ``C A^k`` for large ``k``) stay
    within its tolerances; the value is scaled back.
    """
    c = np.asarray(c, float)
    dim = len(c)
    H = np.asarray(H, float)
    h = np.asarray(h, float)
    norms = np.linalg.norm(H, axis=1) if H.size else np.zeros(0)
    zero = norms == 0.0
    if np.any(h[zero] < 0):
        return "infeasible", -np.inf, None
    H, h, norms = H[~zero], h[~zero], norms[~zero]
    scale = float(np.linalg.norm(c))
    if H.shape[0] == 0:
        if scale == 0.0:
            return "optimal", 0.0, np.zeros(dim)
        return "unbounded", np.inf, None
    H = H / norms[:, None]
    h = h / norms
    obj = -c / scale if scale > 0 else np.zeros(dim)
    for options in ({}, {"presolve": False}):
        # second pass only on iteration limit / numerical trouble
        res = linprog(obj, A_ub=H, b_ub=h, bounds=[(None, None)] * dim, method="highs",
                      options=options)
        if res.status == 0:
            return "optimal", -float(res.fun) * scale, res.x
        if res.status == 2:
            # presolve may report "infeasible" for a feasible unbounded
            # problem; a zero objective separates the two
            if scale > 0:
                chk = linprog(np.zeros(dim), A_ub=H, b_ub=h, bounds=[(None, None)] * dim,
                              method="highs")
                if chk.status == 0:
                    return "unbounded", np.inf, None
            return "infeasible", -np.inf, None
        if res.status == 3:
            return "unbounded", np.inf, None
    raise GeometryError(f"LP solver failed: {res.message}")


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Polytope:
    """Convex polyhedron ``{x : H x <= h}``.

    Instances are treated as immutable; every operation returns a new object.
    """

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if H.shape[0] != h.shape[0]:
            raise DimensionError(
                f"H has {H.shape[0]} rows but h has {h.shape[0]} entries")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polytope":
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        n = lower.size
        H = np.vstack([np.eye(n), -np.eye(n)])
        return cls(H, np.concatenate([upper, -lower]))

    @classmethod
    def universe(cls, dim: int) -> "Polytope":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def normalized(self) -> "Polytope":
        """Rows scaled to unit Euclidean norm (all-zero rows are kept)."""
        norms = np.linalg.norm(self.H, axis=1)
        scale = np.where(norms > 0, norms, 1.0)
        return Polytope(self.H / scale[:, None], self.h / scale)

    def __repr__(self) -> str:
        return f"Polytope(dim={self.dim}, rows={self.n_rows})"


@dataclass(frozen=True)
class MismatchSet:
    """``B_map @ Delta_delta + ball_radius * B_m`` with ``Delta_delta`` the
    infinity-norm ball of radius ``delta``.

    Its support function has the closed form
    ``delta * ||B_map.T a||_1 + ball_radius * ||a||_2``.
    """

    B_map: np.ndarray
    delta: float = 0.0
    ball_radius: float = 0.0

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B_map, dtype=float))
        if self.delta < 0 or self.ball_radius < 0:
            raise ValueError("delta and ball_radius must be nonnegative")
        B.setflags(write=False)
        object.__setattr__(self, "B_map", B)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "ball_radius", float(self.ball_radius))

    @property
    def dim(self) -> int:
        return self.B_map.shape[0]

    @classmethod
    def zero(cls, dim: int) -> "MismatchSet":
        return cls(np.zeros((dim, 0)))

    @classmethod
    def ball(cls, dim: int, radius: float) -> "MismatchSet":
        return cls(np.zeros((dim, 0)), 0.0, radius)

    @property
    def is_zero(self) -> bool:
        return self.ball_radius == 0.0 and (
            self.delta == 0.0 or not np.any(self.B_map))

    def support_many(self, directions: np.ndarray) -> np.ndarray:
        """Support values for each row of ``directions``."""
        D = np.atleast_2d(directions)
        out = np.zeros(D.shape[0])
        if self.delta > 0 and self.B_map.shape[1] > 0:
            out += self.delta * np.abs(D @ self.B_map).sum(axis=1)
        if self.ball_radius > 0:
            out += self.ball_radius * np.linalg.norm(D, axis=1)
        return out


# ---------------------------------------------------------------------------
# Operations


def support(S: Polytope | MismatchSet, a: Sequence[float]) -> float:
    """Return ``sup_{x in S} a @ x``.

    Raises
    ------
    EmptyPolytopeError
        If ``S`` is an empty polytope.
    UnboundedError
        If ``S`` is unbounded in direction ``a``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    if isinstance(S, MismatchSet):
        return float(S.support_many(a[None, :])[0])
    if a.size != S.dim:
        raise DimensionError(f"direction has length {a.size}, polytope dim {S.dim}")
    status, value, _ = _lp_max(a, S.H, S.h)
    if status == "infeasible":
        raise EmptyPolytopeError("support of an empty polytope")
    if status == "unbounded":
        raise UnboundedError(f"polytope unbounded in direction {a}")
    return value


def tighten(P: Polytope, S: MismatchSet, M_img: np.ndarray | None = None) -> Polytope:
    """Minkowski difference ``P - M_img S`` in halfspace form.

    Exact for a convex subtrahend: row ``i`` offset drops by the support of
    ``M_img S`` in direction ``H_i``.
    """
    if M_img is None:
        M_img = np.eye(P.dim)
    M_img = np.atleast_2d(np.asarray(M_img, float))
    if M_img.shape != (P.dim, S.dim):
        raise DimensionError(
            f"image matrix shape {M_img.shape} incompatible with dims {(P.dim, S.dim)}")
    s = S.support_many(P.H @ M_img)
    return Polytope(P.H, P.h - s)


def intersect(P: Polytope, Q: Polytope) -> Polytope:
    if P.dim != Q.dim:
        raise DimensionError(f"cannot intersect dim {P.dim} with dim {Q.dim}")
    return Polytope(np.vstack([P.H, Q.H]), np.concatenate([P.h, Q.h]))


def max_slack(P: Polytope) -> float:
    """Largest ``s <= 1`` such that some ``x`` has ``H x + s <= h``.

    Negative means empty (by that margin).
    """
    if P.n_rows == 0:
        return 1.0
    n = P.dim
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A = np.hstack([P.H, np.ones((P.n_rows, 1))])
    res = linprog(-c, A_ub=A, b_ub=P.h,
                  bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        raise GeometryError(f"slack LP failed: {res.message}")
    return -float(res.fun)


def is_empty(P: Polytope, tol: float = ABS_TOL) -> bool:
    return max_slack(P) < -tol


def contains(P: Polytope, x, tol: float = ABS_TOL):
    """Pointwise membership ``H x <= h + tol``.

    ``x`` may be a single point or an ``(N, dim)`` array, in which case a
    boolean mask is returned.
    """
    x = np.asarray(x, float)
    if x.ndim == 1:
        return bool(np.all(P.H @ x <= P.h + tol))
    return np.all(x @ P.H.T <= P.h + tol, axis=1)


def is_subset(P: Polytope, Q: Polytope, tol: float = ABS_TOL) -> bool:
    """LP-verified inclusion ``P ⊆ Q``; an empty ``P`` is a subset of anything."""
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    if is_empty(P, tol):
        return True
    for Hi, hi in zip(Q.H, Q.h):
        status, value, _ = _lp_max(Hi, P.H, P.h)
        if status == "unbounded" or value > hi + tol:
            return False
    return True


def set_equal(P: Polytope, Q: Polytope, tol: float = ABS_TOL) -> bool:
    return is_subset(P, Q, tol) and is_subset(Q, P, tol)


def remove_redundancy(P: Polytope, tol: float = ABS_TOL) -> Polytope:
    """Drop every row implied by the remaining ones.

    Each row is relaxed in turn and maximized over the others; it is redundant
    when the maximum does not exceed its offset by more than ``tol``.
    """
    if P.n_rows == 0:
        return P
    if is_empty(P, tol):
        raise EmptyPolytopeError("cannot reduce an empty polytope")
    Pn = P.normalized()
    H, h = Pn.H, Pn.h
    norms = np.linalg.norm(P.H, axis=1)
    keep = np.ones(P.n_rows, dtype=bool)
    # trivial rows 0 @ x <= h with h >= 0
    keep &= norms > 0
    # exact duplicates after normalization: keep the tightest
    order = np.lexsort((h, *H.T[::-1]))
    for a, b in zip(order[:-1], order[1:]):
        if keep[a] and keep[b] and np.allclose(H[a], H[b], atol=1e-12, rtol=0):
            keep[b if h[a] <= h[b] else a] = False
    for i in range(P.n_rows):
        if not keep[i]:
            continue
        keep[i] = False
        idx = np.flatnonzero(keep)
        status, value, _ = _lp_max(H[i], H[idx], h[idx])
        if status == "infeasible":
            raise GeometryError("remaining rows infeasible during reduction")
        if status == "unbounded" or value > h[i] + tol:
            keep[i] = True
    return Polytope(P.H[keep], P.h[keep])


def bounding_box(P: Polytope) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box by ``2 * dim`` LPs."""
    lo = np.empty(P.dim)
    hi = np.empty(P.dim)
    for j in range(P.dim):
        e = np.zeros(P.dim)
        e[j] = 1.0
        hi[j] = support(P, e)
        lo[j] = -support(P, -e)
    return lo, hi


def is_bounded(P: Polytope) -> bool:
    try:
        bounding_box(P)
    except UnboundedError:
        return False
    return True


# ---------------------------------------------------------------------------
# Planar vertex enumeration and hulls


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _clip(poly: list[np.ndarray], a: np.ndarray, b: float) -> list[np.ndarray]:
    """Clip a convex polygon (vertex cycle) by ``a @ x <= b``."""
    out: list[np.ndarray] = []
    m = len(poly)
    for k in range(m):
        p, q = poly[k], poly[(k + 1) % m]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


def _clean_cycle(pts: list[np.ndarray], scale: float) -> np.ndarray:
    """Remove near-duplicate and collinear points from a convex cycle."""
    eps = 1e-10 * max(scale, 1.0)
    pts = [p for p in pts]
    changed = True
    while changed and len(pts) > 1:
        changed = False
        for k in range(len(pts)):
            if np.linalg.norm(pts[k] - pts[(k + 1) % len(pts)]) <= eps:
                del pts[(k + 1) % len(pts)]
                changed = True
                break
    changed = True
    while changed and len(pts) > 2:
        changed = False
        for k in range(len(pts)):
            o, p, q = pts[k - 1], pts[k], pts[(k + 1) % len(pts)]
            if abs(_cross(o, p, q)) <= eps * max(np.linalg.norm(q - o), 1.0):
                del pts[k]
                changed = True
                break
    return np.array(pts).reshape(-1, 2)


def vertices_2d(P: Polytope) -> np.ndarray:
    """Counterclockwise vertex cycle of a bounded planar polytope.

    The bounding box is clipped successively by every halfspace.  Degenerate
    polytopes come back as a segment (2 points) or a single point.
    """
    if P.dim != 2:
        raise DimensionError(f"vertex enumeration supports dim 2 only, got {P.dim}")
    if is_empty(P):
        raise EmptyPolytopeError("empty polytope has no vertices")
    lo, hi = bounding_box(P)
    pad = 1e-9 * max(1.0, float(np.max(np.abs(np.r_[lo, hi]))))
    lo, hi = lo - pad, hi + pad
    poly = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
            np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    Pn = P.normalized()
    for a, b in zip(Pn.H, Pn.h):
        if not np.any(a):
            continue
        poly = _clip(poly, a, b)
        if not poly:
            raise EmptyPolytopeError("polygon clipped away")
    scale = float(np.max(hi - lo))
    V = _clean_cycle(poly, scale)
    if len(V) >= 3 and _signed_area(V) < 0:
        V = V[::-1]
    return V


def _signed_area(V: np.ndarray) -> float:
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(V: np.ndarray) -> float:
    if len(V) < 3:
        return 0.0
    return abs(_signed_area(V))


def polygon_perimeter(V: np.ndarray) -> float:
    if len(V) < 2:
        return 0.0
    if len(V) == 2:
        return 2.0 * float(np.linalg.norm(V[1] - V[0]))
    return float(np.linalg.norm(V - np.roll(V, -1, axis=0), axis=1).sum())


def convex_hull_points(points) -> np.ndarray:
    """Andrew's monotone chain; counterclockwise, no repeated endpoint."""
    pts = sorted({(float(p[0]), float(p[1])) for p in np.asarray(points, float)})
    if len(pts) <= 2:
        return np.array(pts).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_2d(points) -> tuple[Polytope, np.ndarray]:
    """Convex hull of a finite planar point set as (H-rep, ccw vertices)."""
    pts = np.asarray(points, float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise EmptyPolytopeError("hull of no points")
    V = convex_hull_points(pts)
    scale = float(np.max(np.abs(pts))) if pts.size else 1.0
    V = _clean_cycle(list(V), scale) if len(V) > 2 else V
    if len(V) == 1:
        return Polytope.box(V[0], V[0]), V
    if len(V) == 2:
        d = V[1] - V[0]
        d = d / np.linalg.norm(d)
        nrm = np.array([-d[1], d[0]])
        H = np.vstack([nrm, -nrm, d, -d])
        h = np.array([nrm @ V[0], -nrm @ V[0], d @ V[1], -d @ V[0]])
        return Polytope(H, h), V
    E = np.roll(V, -1, axis=0) - V
    N = np.column_stack([E[:, 1], -E[:, 0]])
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    return Polytope(N, np.einsum("ij,ij->i", N, V)), V


# ---------------------------------------------------------------------------
# Text I/O


def polytope_to_text(P: Polytope, header: dict | None = None) -> str:
    """``n_rows n_cols`` then one ``H_i1 ... H_in h_i`` line per row.

    ``n_cols`` is the state dimension.  Optional ``# key: value`` comment
    lines precede the matrix; readers skip them.
    """
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    buf.write(f"{P.n_rows} {P.dim}\n")
    for Hi, hi in zip(P.H, P.h):
        buf.write(" ".join(repr(float(v)) for v in (*Hi, hi)) + "\n")
    return buf.getvalue()


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def polytope_from_text(text: str) -> Polytope:
    lines = _data_lines(text)
    n_rows, n_cols = (int(t) for t in lines[0].split())
    data = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + n_rows]])
    data = data.reshape(n_rows, n_cols + 1)
    return Polytope(data[:, :n_cols], data[:, n_cols])


def read_header(text: str) -> dict[str, str]:
    out = {}
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("#") and ":" in s:
            k, v = s[1:].split(":", 1)
            out[k.strip()] = v.strip()
    return out


def vertices_to_csv(V: np.ndarray) -> str:
    lines = ["x1,x2"] + [f"{float(v[0])!r},{float(v[1])!r}" for v in np.asarray(V, float)]
    return "\n".join(lines) + "\n"
