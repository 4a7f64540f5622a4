"""Command-line front end.

    liftinv immerse   --config PATH [--out DIR] [--seed N]
    liftinv invariant --config PATH [--model PATH] [--out DIR] [--seed N] [--svg]
    liftinv certify   --config PATH [--out DIR]
    liftinv example   {wiener,building} [--out DIR] [--seed N] [--svg]

Exit codes: 0 success, 2 invalid configuration, 3 no nonempty invariant set
found, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys as _sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, geometry
from .certification import AssumptionReport, certify, chain_to_csv
from .config import ConfigError, RunConfig, bundled_path, dump_yaml, load_yaml, resolve
from .dynamics import DivergenceError, build_sample
from .immersion import (InsufficientSampleError, LiftedModel, assemble, fit_gamma,
                        fit_gamma_minimax,
                        inflate_for_covering, lipschitz_transform, model_from_text,
                        observability_index,
                        model_to_text, reduce_basis)
from .invariance import (ExhaustionError, InvariantResult, disturbance_gain, disturbance_set,
                         model_mais, preimage_contains, run_algorithm1, sample_preimage)
from .lifting import build_cascade_immersion
from .sampling import (grid_certificate, grid_points, pitch_for_count, random_certificate,
                       random_points)
from .svg import raster_to_svg

logger = logging.getLogger("liftinv")

EXIT_OK, EXIT_CONFIG, EXIT_EXHAUSTED, EXIT_NUMERICAL = 0, 2, 3, 4


# ------------------------------------------------------------------ helpers

class Run:
    """Output directory plus the metadata collected while running."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.meta: dict = {"name": cfg.name, "kind": cfg.kind, "seed": cfg.seed,
                           "version": __version__}
        self.curve: tuple | None = None  # (curve, basis dims, counts) once written
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        return path

    def finish(self):
        self.write("effective_config.yaml", dump_yaml(self.cfg.effective()))
        self.write("run_metadata.yaml", dump_yaml(self.meta))


def _ridge(cfg):
    r = cfg.pipeline["ridge"]
    return None if r == "auto" else r


def _rank_tol(cfg):
    r = cfg.pipeline["rank_tol"]
    return None if r == "auto" else r


def _sample_points(run: Run):
    cfg = run.cfg
    smp = cfg.pipeline["sampling"]
    if smp["kind"] == "grid":
        eta = float(smp["eta"]) if "eta" in smp else pitch_for_count(cfg.X, int(smp["count"]))
        pts = grid_points(cfg.X, eta)
        cert = grid_certificate(cfg.X, eta)
    else:
        pts = random_points(cfg.X, int(smp["N"]), cfg.seed)
        eta = float(smp.get("eta", cfg.pipeline["rho"]))
        cert = random_certificate(cfg.X, eta, cfg.pipeline["rho"], len(pts))
    run.meta["sampling"] = {"kind": smp["kind"], "points": int(len(pts)), "eta": float(eta),
                            "certificate": cert.as_dict()}
    return pts, cert


def _lipschitz(run: Run) -> float | None:
    cfg = run.cfg
    if cfg.pipeline["L_f"] is not None:
        return float(cfg.pipeline["L_f"])
    if cfg.system.affine_gradient is not None and cfg.system.dim <= 2:
        from .certification import lipschitz_vertex
        return lipschitz_vertex(cfg.system, cfg.X)
    return None


def _write_curve(run: Run, curve: dict, dims: dict, counts: dict):
    """Write the delta curve, merging with one written earlier in the same run."""
    if run.curve is not None:
        c0, d0, n0 = run.curve
        curve, dims, counts = {**curve, **c0}, {**d0, **dims}, {**counts, **n0}
    run.curve = (curve, dims, counts)
    run.write("delta_curve.csv", _curve_csv(curve, dims, counts))


def _curve_csv(curve: dict, dims: dict, counts: dict) -> str:
    lines = ["M,delta_hat,n_points,basis_dim"]
    for M in sorted(curve):
        lines.append(f"{M},{curve[M]!r},{counts.get(M, '')},{dims.get(M, '')}")
    return "\n".join(lines) + "\n"


def _delta_curve(run: Run, sample):
    cfg = run.cfg
    curve, counts, fits = {}, {}, {}
    for M in range(cfg.pipeline["M_max"] + 1):
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RuntimeWarning)
                if cfg.pipeline["fit"] == "minimax":
                    fit = fit_gamma_minimax(sample, M)
                else:
                    fit = fit_gamma(sample, M, _ridge(cfg))
            for w in caught:
                logger.info("%s", w.message)
        except InsufficientSampleError as exc:
            logger.warning("stopping delta curve at M=%d: %s", M, exc)
            break
        curve[M], counts[M], fits[M] = fit.delta_hat, fit.n_points, fit
    return curve, counts, fits


def _omega_text(res: InvariantResult, extra: dict | None = None) -> str:
    header = {k: v for k, v in res.metadata().items()}
    header.update(extra or {})
    return geometry.polytope_to_text(res.omega, header)


# ---------------------------------------------------------------- commands

def cmd_immerse(run: Run) -> LiftedModel:
    cfg = run.cfg
    t0 = time.perf_counter()
    pts, _ = _sample_points(run)
    sample = build_sample(cfg.system, cfg.X, pts, cfg.pipeline["t_f"])
    run.meta["largest_populated_k"] = sample.largest_populated_k()
    curve, counts, fits = _delta_curve(run, sample)
    dims: dict = {}
    if cfg.cascade is not None:
        model = build_cascade_immersion(cfg.cascade)
        res = np.abs(model.residual(cfg.system, pts)).max() if len(pts) else 0.0
        M_s = observability_index(model.C, model.A)
        run.meta["immersion"] = {"exact": True, "lifted_dim": model.m,
                                 "residual_inf": float(res), "structural_M": M_s}
        if M_s is not None and M_s in curve:
            run.meta["immersion"]["delta_hat_structural"] = float(curve[M_s])
    else:
        target = cfg.pipeline["delta_target"]
        chosen = next((M for M in sorted(curve) if curve[M] < target), None)
        if chosen is None:
            _write_curve(run, curve, dims, counts)
            raise ExhaustionError(f"delta_hat never below {target} for M <= "
                                  f"{cfg.pipeline['M_max']}", [target], curve)
        P, m, ratio = reduce_basis(sample, chosen, _rank_tol(cfg))
        dims[chosen] = m
        model = assemble(fits[chosen].gamma, P, curve[chosen], 0.0, ratio)
        run.meta["immersion"] = {"exact": False, "M": chosen, "lifted_dim": m,
                                 "delta_hat": float(curve[chosen]),
                                 "sigma_ratio": float(ratio)}
    _write_curve(run, curve, dims, counts)
    run.write("model.txt", model_to_text(model))
    run.meta["timing_immerse_s"] = round(time.perf_counter() - t0, 3)
    return model


def cmd_certify(run: Run) -> AssumptionReport:
    cfg = run.cfg
    t0 = time.perf_counter()
    if cfg.system.dim > 2 or (cfg.system.factored is None and cfg.system.affine_gradient is None):
        rep = AssumptionReport(L_f=None, verdicts={k: "not-checked" for k in
                                                   ("A1", "A2", "A3", "A4")})
    else:
        rep = certify(cfg.system, cfg.X, cfg.pipeline["rho"], cfg.pipeline["reach_steps"],
                      cfg.pipeline["max_vertices"], cfg.seed)
    run.write("report.txt", rep.render())
    for i, V in enumerate(rep.chain_vertices):
        run.write(f"reach_chain_{i:02d}.csv", chain_to_csv(V))
    run.meta["assumptions"] = rep.as_dict()
    run.meta["timing_certify_s"] = round(time.perf_counter() - t0, 3)
    return rep


def _raster_2d(run: Run, model, omega, omega_robust) -> str:
    cfg = run.cfg
    lo, hi = geometry.bounding_box(cfg.X)
    r = cfg.output["raster"]
    gx = np.linspace(lo[0], hi[0], r)
    gy = np.linspace(lo[1], hi[1], r)
    XX, YY = np.meshgrid(gx, gy)
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    in_x = cfg.admissible(pts)
    inside = preimage_contains(model, cfg.system, omega, pts) if omega is not None \
        else np.zeros(len(pts), bool)
    cols = [pts[:, 0], pts[:, 1], inside.astype(int), in_x.astype(int)]
    header = "x1,x2,inside,in_X"
    stats = {"cells": int(len(pts)), "inside": int(inside.sum()), "in_X": int(in_x.sum()),
             "inside_subset_of_X": bool(np.all(in_x[inside]))}
    if omega_robust is not None:
        rob = preimage_contains(model, cfg.system, omega_robust, pts)
        cols.append(rob.astype(int))
        header += ",inside_robust"
        stats["inside_robust"] = int(rob.sum())
        stats["robust_subset_of_inside"] = bool(np.all(inside[rob]))
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in zip(*cols):
        buf.write(f"{float(row[0])!r},{float(row[1])!r}," + ",".join(str(int(v)) for v in row[2:])
                  + "\n")
    run.meta["raster"] = stats
    return buf.getvalue()


def _projection_rasters(run: Run, model, omega) -> dict:
    """Monte-Carlo projections of the preimage onto coordinate pairs."""
    cfg = run.cfg
    n = cfg.system.dim
    r = cfg.output["raster"]
    pts, draws = sample_preimage(model, cfg.system, omega, cfg.pipeline["mc_samples"],
                                 cfg.seed, prefilter=cfg.admissible,
                                 max_draws=cfg.pipeline["mc_samples"])
    lo, hi = geometry.bounding_box(cfg.X)
    out = {}
    pairs = [(i, i + 1) for i in range(0, n - 1, 2)]
    for a, b in pairs:
        gx = np.linspace(lo[a], hi[a], r)
        gy = np.linspace(lo[b], hi[b], r)
        hit = np.zeros((r, r), bool)
        if len(pts):
            ia = np.clip(np.rint((pts[:, a] - lo[a]) / (hi[a] - lo[a]) * (r - 1)), 0, r - 1)
            ib = np.clip(np.rint((pts[:, b] - lo[b]) / (hi[b] - lo[b]) * (r - 1)), 0, r - 1)
            hit[ib.astype(int), ia.astype(int)] = True
        buf = io.StringIO()
        buf.write(f"x{a + 1},x{b + 1},inside,in_X\n")
        for j in range(r):
            for i in range(r):
                buf.write(f"{float(gx[i])!r},{float(gy[j])!r},{int(hit[j, i])},1\n")
        name = "preimage.csv" if (a, b) == pairs[0] else f"preimage_x{a + 1}x{b + 1}.csv"
        out[name] = buf.getvalue()
    run.meta["raster"] = {"monte_carlo_draws": int(draws), "accepted": int(len(pts)),
                          "pairs": [[a + 1, b + 1] for a, b in pairs]}
    return out


def cmd_invariant(run: Run, model_path: str | None = None):
    cfg = run.cfg
    t0 = time.perf_counter()
    p = cfg.pipeline
    robust = None
    if model_path is not None:
        model = model_from_text(Path(model_path).read_text())
        C_out, X_out = cfg.lifted_constraints(model)
        if C_out.shape[1] != model.m:
            raise ConfigError("--model", "model dimension does not match the config")
        res = model_mais(model, X_out, p["k_max"], output_map=C_out, tol=p["tol"])
        if res.empty:
            raise ExhaustionError("invariant set of the saved model is empty")
        run.meta["algorithm1"] = {"source": str(model_path)}
    elif cfg.cascade is not None:
        model = build_cascade_immersion(cfg.cascade)
        run.write("model.txt", model_to_text(model))
        C_out, X_out = cfg.lifted_constraints(model)
        res = model_mais(model, X_out, p["k_max"], output_map=C_out, tol=p["tol"])
        if res.empty:
            raise ExhaustionError("lifted invariant set is empty")
    else:
        pts, cert = _sample_points(run)
        sample = build_sample(cfg.system, cfg.X, pts, p["t_f"])
        run.meta["largest_populated_k"] = sample.largest_populated_k()
        try:
            a1 = run_algorithm1(cfg.system, cfg.X, p["delta_target"], sample, p["M_max"],
                                _ridge(cfg), _rank_tol(cfg), p["k_max"], tol=p["tol"],
                                method=p["fit"])
        except ExhaustionError as exc:
            _write_curve(run, exc.delta_curve, {}, {})
            run.meta["algorithm1"] = {"delta_schedule": exc.delta_schedule}
            raise
        model, res = a1.model, a1.result
        run.write("model.txt", model_to_text(model))
        _write_curve(run, a1.delta_curve, a1.basis_dims, {})
        run.meta["algorithm1"] = {"M": a1.M, "delta_schedule": a1.delta_schedule,
                                  "delta_hat": float(model.delta_hat),
                                  "lifted_dim": model.m,
                                  "sigma_ratio": float(model.sigma_ratio)}
        L_f = _lipschitz(run)
        if L_f is not None:
            run.meta["L_f"] = float(L_f)
            L_T = lipschitz_transform(model.M, L_f, model.P)
            A_norm = float(np.linalg.norm(model.A, 2))
            cov = inflate_for_covering(model.delta_hat, L_T, L_f, A_norm, cert.epsilon,
                                       model.B)
            run.meta["covering_inflation"] = {"L_T": L_T, "A_norm": A_norm,
                                              "epsilon": cert.epsilon,
                                              "ball_radius": cov.ball_radius,
                                              "applied": bool(p["inflate_covering"])}
            if p["inflate_covering"]:
                model = assemble(model.gamma, model.P, model.delta_hat, cov.ball_radius,
                                 model.sigma_ratio, exact=False)
                res = model_mais(model, cfg.X, p["k_max"], tol=p["tol"])
                if res.empty:
                    raise ExhaustionError("invariant set empty after covering inflation")
    if cfg.disturbance_radius and cfg.cascade is None:
        L_f = _lipschitz(run)
        if L_f is None:
            raise ConfigError("pipeline.L_f", "needed to account for the disturbance")
        dset = disturbance_set(model, L_f, cfg.disturbance_radius)
        radius = dset.ball_radius
        L_tilde = disturbance_gain(model.M, L_f)
        rres = model_mais(model, cfg.X, p["k_max"],
                          extra=[dset], tol=p["tol"])
        run.meta["disturbance"] = {"radius": cfg.disturbance_radius, "L_tilde": L_tilde,
                                   "ball_radius": radius, "empty": rres.empty,
                                   "k_star": rres.k_star}
        run.write("omega_robust.txt", _omega_text(rres, {"disturbance_ball": radius}))
        if not rres.empty:
            robust = rres.omega
    run.write("omega.txt", _omega_text(res))
    run.meta["omega"] = res.metadata()

    if cfg.system.dim == 2:
        rasters = {"preimage.csv": _raster_2d(run, model, res.omega, robust)}
    else:
        rasters = _projection_rasters(run, model, res.omega)
    for name, text in rasters.items():
        run.write(name, text)
        if cfg.output["svg"]:
            run.write(name.replace(".csv", ".svg"), raster_to_svg(text, title=cfg.name))
    run.meta["timing_invariant_s"] = round(time.perf_counter() - t0, 3)
    return model, res


# ------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liftinv", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--svg", action="store_true", default=None, help="write SVG figures")

    common(sub.add_parser("immerse", help="fit the lifted model and the delta curve"))
    p = sub.add_parser("invariant", help="compute the invariant set and its preimage")
    common(p)
    p.add_argument("--model", help="reuse a saved model.txt")
    common(sub.add_parser("certify", help="check the standing assumptions"))
    p = sub.add_parser("example", help="run a bundled example end to end")
    p.add_argument("name", choices=["wiener", "building"])
    common(p, config=False)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = bundled_path(args.name) if args.command == "example" else args.config
        cfg = resolve(load_yaml(path), seed=args.seed, out_dir=args.out, svg=args.svg)
        run = Run(cfg, Path(cfg.output["directory"]))
        run.meta["command"] = args.command
        try:
            if args.command == "immerse":
                cmd_immerse(run)
            elif args.command == "certify":
                cmd_certify(run)
            elif args.command == "invariant":
                cmd_invariant(run, args.model)
            else:
                cmd_immerse(run)
                if cfg.system.dim <= 2:
                    cmd_certify(run)
                cmd_invariant(run)
        finally:
            run.finish()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except ExhaustionError as exc:
        print(f"no invariant set: {exc}", file=_sys.stderr)
        if exc.delta_schedule:
            print(f"delta schedule: {exc.delta_schedule}", file=_sys.stderr)
        return EXIT_EXHAUSTED
    except (np.linalg.LinAlgError, geometry.GeometryError, DivergenceError,
            InsufficientSampleError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL
    summary = {k: run.meta[k] for k in ("algorithm1", "omega", "immersion") if k in run.meta}
    print(f"{args.command} finished; outputs in {run.out}")
    for k, v in summary.items():
        print(f"  {k}: {v}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
