"""Run configuration: loading, validation and default filling.

A config is a YAML mapping with four blocks::

    system:       kind (polynomial | cascade) and its data
    constraints:  H/h rows or a box, plus optional output functionals
    pipeline:     delta_target, t_f, M_max, sampling, rho, ridge, ...
    output:       directory, raster, svg

Every default filled in here is written back into the effective config.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import geometry
from .dynamics import NonlinearSystem, _normalize_coefficients, _poly_eval
from .geometry import Polytope
from .lifting import CascadeSystem

BUNDLED = ("wiener", "building")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


PIPELINE_DEFAULTS = {
    "M_max": 10,
    "sampling": {"kind": "grid", "count": 10000},
    "rho": None,
    "ridge": None,
    "fit": "lstsq",
    "rank_tol": None,
    "k_max": 200,
    "tol": 1e-9,
    "reach_steps": 20,
    "max_vertices": 2000,
    "inflate_covering": False,
    "L_f": None,
    "mc_samples": 200000,
}
OUTPUT_DEFAULTS = {"directory": "out", "raster": 200, "svg": False}


def _matrix(raw, name: str, shape=None) -> np.ndarray:
    try:
        A = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"not a numeric matrix ({exc})") from None
    if A.ndim == 1 and shape is not None and len(shape) == 2:
        A = A.reshape(1, -1) if shape[0] == 1 else A.reshape(-1, 1)
    if shape is not None:
        for got, want in zip(A.shape, shape):
            if want is not None and got != want:
                raise ConfigError(name, f"shape {A.shape} does not match expected {shape}")
        if A.ndim != len(shape):
            raise ConfigError(name, f"expected {len(shape)}-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ConfigError(name, "contains non-finite entries")
    return A


def _terms(raw, name: str, dim: int | None = None) -> list:
    if not isinstance(raw, list):
        raise ConfigError(name, "expected a list of [exponent, coefficient] pairs")
    out = []
    for k, item in enumerate(raw):
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise ConfigError(f"{name}[{k}]", "expected [exponent, coefficient]")
        alpha, c = item
        try:
            alpha = tuple(int(a) for a in alpha)
            c = float(c)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}[{k}]", "bad exponent or coefficient") from None
        if dim is not None and len(alpha) != dim:
            raise ConfigError(f"{name}[{k}]", f"exponent length {len(alpha)} != {dim}")
        if any(a < 0 for a in alpha):
            raise ConfigError(f"{name}[{k}]", "negative exponent")
        out.append((alpha, c))
    return out


@dataclass
class OutputFunctional:
    """Constraint ``lower <= y(x) <= upper``.

    ``y`` is either a polynomial in the state (``terms``) or, for cascade
    systems, a linear functional ``row @ T(x)`` of the lifted state.
    """

    name: str
    terms: list | None
    lower: float
    upper: float
    row: np.ndarray | None = None
    cascade: CascadeSystem | None = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.row is not None:
            from .lifting import lift_vector_graded
            ne, nz, d = self.cascade.n_eta, self.cascade.n_z, self.cascade.d
            xi = np.concatenate([x[:, :ne], lift_vector_graded(x[:, ne:ne + nz], d)], axis=1)
            return xi @ self.row
        coeffs = _normalize_coefficients([self.terms])
        return _poly_eval(coeffs, x)[:, 0]

    def lifted(self) -> tuple[np.ndarray, float]:
        if self.row is not None:
            return self.row, 0.0
        return self.cascade.lifted_row(self.terms)


@dataclass
class RunConfig:
    name: str
    raw: dict
    system: NonlinearSystem
    X: Polytope
    cascade: CascadeSystem | None
    outputs: list
    disturbance_radius: float | None
    pipeline: dict
    output: dict
    seed: int
    notes: list = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "cascade" if self.cascade is not None else "polynomial"

    def admissible(self, x, tol: float = geometry.ABS_TOL) -> np.ndarray:
        """State constraints plus every output functional."""
        x = np.atleast_2d(np.asarray(x, float))
        ok = geometry.contains(self.X, x, tol)
        for fn in self.outputs:
            v = fn.evaluate(x)
            ok &= (v >= fn.lower - tol) & (v <= fn.upper + tol)
        return ok

    def lifted_constraints(self, model):
        """Output map and constraint polytope acting on the lifted state."""
        if not self.outputs:
            return model.C, self.X
        rows, lo, hi = [], [], []
        for fn in self.outputs:
            r, c = fn.lifted()
            rows.append(r)
            lo.append(fn.lower - c)
            hi.append(fn.upper - c)
        R = np.vstack(rows)
        C_out = np.vstack([model.C, R])
        p = len(rows)
        n = self.X.dim
        H = np.zeros((self.X.n_rows + 2 * p, n + p))
        H[:self.X.n_rows, :n] = self.X.H
        H[self.X.n_rows:self.X.n_rows + p, n:] = np.eye(p)
        H[self.X.n_rows + p:, n:] = -np.eye(p)
        h = np.concatenate([self.X.h, hi, -np.asarray(lo)])
        return C_out, Polytope(H, h)

    def effective(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["pipeline"] = copy.deepcopy(self.pipeline)
        out["output"] = copy.deepcopy(self.output)
        out["seed"] = self.seed
        return out


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"YAML parse error: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    return raw


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ConfigError("example", f"unknown example {name!r}; choose from {BUNDLED}")
    return Path(__file__).parent / "data" / f"{name}.yaml"


def _build_polynomial(s: dict):
    coeffs = s.get("coefficients")
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("system.coefficients", "required list, one entry per output")
    n = len(coeffs)
    table = [_terms(row, f"system.coefficients[{i}]", n) for i, row in enumerate(coeffs)]
    factored = None
    if "factored" in s and s["factored"] is not None:
        fac = s["factored"]
        A = _matrix(fac.get("A"), "system.factored.A", (n, n))
        Abar = fac.get("Abar")
        if not isinstance(Abar, list) or len(Abar) != n:
            raise ConfigError("system.factored.Abar", f"expected {n} matrices")
        Abar = [_matrix(a, f"system.factored.Abar[{k}]", (n, n)) for k, a in enumerate(Abar)]
        factored = (A, Abar)
    sys = NonlinearSystem.polynomial(table, factored=factored, name=s.get("name", ""))
    if factored is not None:
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(100, n))
        err = sys.check_factored(pts)
        if err > 1e-9:
            raise ConfigError("system.factored", f"(A + Abar(x)) x differs from f(x) by {err:.3e}")
    return sys, None


def _build_cascade(s: dict):
    A_z = _matrix(s.get("A_z"), "system.A_z")
    if A_z.ndim != 2 or A_z.shape[0] != A_z.shape[1]:
        raise ConfigError("system.A_z", f"must be square, got shape {A_z.shape}")
    nz = A_z.shape[0]
    A_eta = _matrix(s.get("A_eta"), "system.A_eta")
    if A_eta.ndim != 2 or A_eta.shape[0] != A_eta.shape[1]:
        raise ConfigError("system.A_eta", f"must be square, got shape {A_eta.shape}")
    ne = A_eta.shape[0]
    try:
        if "feedback" in s:
            fb = s["feedback"]
            B = _matrix(fb.get("B"), "system.feedback.B")
            if B.size % ne:
                raise ConfigError("system.feedback.B", f"needs {ne} rows")
            B = B.reshape(ne, -1)
            nu = B.shape[1]
            K = _matrix(fb.get("K"), "system.feedback.K", (nu, ne))
            Ls = fb.get("L")
            if not isinstance(Ls, list) or not Ls:
                raise ConfigError("system.feedback.L", "expected a list of blocks")
            from ._monomials import count_of_degree
            Ls = [_matrix(L, f"system.feedback.L[{k}]", (nu, count_of_degree(nz, k + 1)))
                  for k, L in enumerate(Ls)]
            cs = CascadeSystem.from_feedback(A_eta, B, K, Ls, A_z)
        elif "F" in s:
            cs = CascadeSystem(A_eta, A_z, tuple(_matrix(F, f"system.F[{k}]")
                                                 for k, F in enumerate(s["F"])))
        elif "phi" in s:
            phi = [_terms(row, f"system.phi[{i}]", nz) for i, row in enumerate(s["phi"])]
            cs = CascadeSystem.from_phi(A_eta, A_z, phi, s.get("d"))
        else:
            raise ConfigError("system", "cascade needs one of feedback, F or phi")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("system", str(exc)) from None
    return cs.as_system(s.get("name", "")), cs


def _build_constraints(c: dict, n: int, cs: CascadeSystem | None) -> tuple[Polytope, list]:
    if not isinstance(c, dict):
        raise ConfigError("constraints", "required mapping")
    if "box" in c:
        lo = _matrix(c["box"].get("lower"), "constraints.box.lower", (n,))
        hi = _matrix(c["box"].get("upper"), "constraints.box.upper", (n,))
        X = Polytope.box(lo, hi)
    elif "H" in c:
        H = _matrix(c["H"], "constraints.H", (None, n))
        h = _matrix(c.get("h"), "constraints.h", (H.shape[0],))
        X = Polytope(H, h)
    else:
        raise ConfigError("constraints", "needs H/h or box")
    if "extra_H" in c:
        H = _matrix(c["extra_H"], "constraints.extra_H", (None, n))
        h = _matrix(c.get("extra_h"), "constraints.extra_h", (H.shape[0],))
        X = geometry.intersect(X, Polytope(H, h))
    if not geometry.is_bounded(X):
        raise ConfigError("constraints", "constraint set must be bounded")
    if geometry.is_empty(X):
        raise ConfigError("constraints", "constraint set is empty")
    outputs = []
    for k, o in enumerate(c.get("outputs") or []):
        name = f"constraints.outputs[{k}]"
        if cs is None:
            raise ConfigError(name, "output functionals are only supported for cascade systems")
        lo, hi = float(o.get("lower", -np.inf)), float(o.get("upper", np.inf))
        if not lo <= hi:
            raise ConfigError(name, "lower exceeds upper")
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ConfigError(name, "lower and upper bounds are required")
        label = o.get("name", f"y{k + 1}")
        if "lifted" in o:
            m = cs.n_eta + sum(F.shape[1] for F in cs.F_blocks)
            row = _matrix(o["lifted"], f"{name}.lifted", (m,))
            fn = OutputFunctional(label, None, lo, hi, row, cs)
        else:
            terms = _terms(o.get("terms"), f"{name}.terms", n)
            fn = OutputFunctional(label, terms, lo, hi, None, cs)
            try:
                fn.lifted()
            except ValueError as exc:
                raise ConfigError(f"{name}.terms", str(exc)) from None
        outputs.append(fn)
    return X, outputs


def _resolve_pipeline(p: dict, X: Polytope, kind: str) -> dict:
    out = copy.deepcopy(PIPELINE_DEFAULTS)
    unknown = set(p) - set(out) - {"delta_target", "t_f"}
    if unknown:
        raise ConfigError("pipeline", f"unknown keys {sorted(unknown)}")
    out.update(p)
    if kind == "polynomial":
        for key in ("delta_target", "t_f"):
            if key not in p:
                raise ConfigError(f"pipeline.{key}", "required")
    out.setdefault("delta_target", 1e-6)
    out.setdefault("t_f", out["M_max"] + 2)
    if not float(out["delta_target"]) > 0:
        raise ConfigError("pipeline.delta_target", "must be positive")
    if int(out["t_f"]) < 1:
        raise ConfigError("pipeline.t_f", "must be at least 1")
    if int(out["M_max"]) >= int(out["t_f"]):
        raise ConfigError("pipeline.M_max", f"must be below t_f={out['t_f']}")
    smp = out["sampling"]
    if not isinstance(smp, dict) or smp.get("kind") not in ("grid", "random"):
        raise ConfigError("pipeline.sampling.kind", "must be grid or random")
    if smp["kind"] == "grid" and not ("eta" in smp or "count" in smp):
        raise ConfigError("pipeline.sampling", "grid needs eta or count")
    if smp["kind"] == "random" and "N" not in smp:
        raise ConfigError("pipeline.sampling.N", "required for random sampling")
    if out["rho"] is None:
        lo, hi = geometry.bounding_box(X)
        out["rho"] = float(0.05 * np.linalg.norm(hi - lo))
    for key in ("delta_target", "tol", "rho"):
        out[key] = float(out[key])
    for key in ("t_f", "M_max", "k_max", "reach_steps", "max_vertices", "mc_samples"):
        out[key] = int(out[key])
    out["ridge"] = "auto" if out["ridge"] in (None, "auto") else float(out["ridge"])
    out["rank_tol"] = "auto" if out["rank_tol"] in (None, "auto") else float(out["rank_tol"])
    if out["fit"] not in ("lstsq", "minimax"):
        raise ConfigError("pipeline.fit", "must be lstsq or minimax")
    return out


def resolve(raw: dict, seed: int | None = None, out_dir: str | None = None,
            svg: bool | None = None) -> RunConfig:
    """Validate ``raw`` and build all objects, before any computation."""
    unknown = set(raw) - {"name", "system", "constraints", "pipeline", "output", "seed"}
    if unknown:
        raise ConfigError("config", f"unknown top-level keys {sorted(unknown)}")
    s = raw.get("system")
    if not isinstance(s, dict):
        raise ConfigError("system", "required mapping")
    kind = s.get("kind", "polynomial")
    if kind == "polynomial":
        sys, cs = _build_polynomial(s)
    elif kind == "cascade":
        sys, cs = _build_cascade(s)
    else:
        raise ConfigError("system.kind", f"unknown kind {kind!r}")
    X, outputs = _build_constraints(raw.get("constraints"), sys.dim, cs)
    dr = s.get("disturbance_radius")
    if dr is not None:
        dr = float(dr)
        if dr < 0:
            raise ConfigError("system.disturbance_radius", "must be nonnegative")
    pipeline = _resolve_pipeline(raw.get("pipeline") or {}, X, kind)
    output = copy.deepcopy(OUTPUT_DEFAULTS)
    output.update(raw.get("output") or {})
    if out_dir is not None:
        output["directory"] = str(out_dir)
    if svg is not None:
        output["svg"] = bool(svg) or bool(output["svg"])
    output["raster"] = int(output["raster"])
    if output["raster"] < 2:
        raise ConfigError("output.raster", "must be at least 2")
    seed = int(raw.get("seed", 0) if seed is None else seed)
    return RunConfig(raw.get("name", kind), copy.deepcopy(raw), sys, X, cs, outputs, dr,
                     pipeline, output, seed)


def dump_yaml(data: dict) -> str:
    return yaml.safe_dump(_plain(data), sort_keys=False)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v
