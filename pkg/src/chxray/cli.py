"""Command line entry point: ``chxray <subcommand> [options]``.

Every run writes ``report.json`` (validated against the bundled schema) plus
CSV tables into ``--out-dir``.  Exit status: 0 on success, 1 on invalid input,
2 on numerical failure or failed checks (details in ``diagnostics.json``).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ConfigError, RunConfig
from .geodesic import GeodesicError, SMPoint, check_distance_bounds, integrate_geodesic, sample_sm
from .harmonics2d import (GridError, SMGrid, contraction_check, eigen_defect, norm_splitting_check,
                          random_band_limited, recursion_check, sample)
from .jacobi import check_rauch_bound, rauch_bound, solve_jacobi
from .manifold import ManifoldModel, ModelError, curvature_sup, parse_model
from .recon import ReconError, relative_error, to_grid
from .tensor import bump, field_from_spec, sym_nabla
from .xray import DecayClassError, HorizonOverflowError, uf, xray_transform

INPUT_ERRORS = (ConfigError, ModelError, GridError, DecayClassError, ValueError)
NUMERICAL_ERRORS = (GeodesicError, HorizonOverflowError, ReconError, FloatingPointError, ArithmeticError)


class ChecksFailed(Exception):
    """Raised after writing artifacts when verification checks fail."""

    def __init__(self, failed):
        super().__init__(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        self.failed = failed


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _vector(text, name):
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(s) for s in str(text).split(",")])
    except ValueError:
        raise ConfigError(f"{name} must be a comma separated list of numbers") from None


def _grid_shape(text) -> tuple[int, int]:
    try:
        nx, ny = (int(s) for s in str(text).split(":"))
    except ValueError:
        raise ConfigError("grid must look like nx:ny") from None
    return nx, ny


def _field_spec(value, default):
    if value is None:
        return default
    if isinstance(value, dict):
        return value
    text = str(value).strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad field JSON: {exc}") from None
    return {"preset": text}


def _seeds(M: ManifoldModel, spec: str, rng) -> SMPoint:
    """``random:N:R`` draws N seeds with |x| < R; ``file:path`` reads x..., v... columns."""
    kind, _, rest = str(spec).partition(":")
    if kind == "random":
        try:
            n, radius = rest.split(":")
            n, radius = int(n), float(radius)
        except ValueError:
            raise ConfigError("seeds must look like random:N:R") from None
        if n < 1 or radius <= 0:
            raise ConfigError("seeds need N >= 1 and R > 0")
        return sample_sm(M, n, radius, rng)
    if kind == "file":
        data = np.loadtxt(rest, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 2 * M.dim:
            raise ConfigError(f"seed file needs {2 * M.dim} columns")
        return SMPoint.make(M, data[:, : M.dim], data[:, M.dim:])
    raise ConfigError(f"unknown seed spec {spec!r}")


# ---------------------------------------------------------------------------
# subcommands: each returns (results, artifacts written, timings)
# ---------------------------------------------------------------------------


def _path_point(M, prm):
    x = _vector(prm["x"], "x")
    v = _vector(prm["v"], "v")
    if x.shape != (M.dim,) or v.shape != (M.dim,):
        raise ConfigError(f"x and v must be {M.dim}-vectors")
    if not np.linalg.norm(v) > 0:
        raise ConfigError("v must be nonzero")
    if np.linalg.norm(x) > M.r_max:
        raise ConfigError("x lies outside the model chart")
    return SMPoint.make(M, x, v)


def run_geodesic(cfg: RunConfig, M: ManifoldModel, out):
    prm = cfg.params
    p = _path_point(M, prm)
    T = float(prm["T"])
    path = integrate_geodesic(M, p, T, prm["step"])
    d = M.dist_to_o(path.x)
    n = M.dim
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + ["dist_o"]
    rows = [[t, *x, *v, dd] for t, x, v, dd in zip(path.t, path.x, path.v, d)]
    files = [artifacts.write_csv(out / "geodesic.csv", header, rows)]
    bounds = check_distance_bounds(M, SMPoint(p.x[None], p.v[None]), T, prm["step"])
    res = {"endpoint_x": path.x[-1], "endpoint_v": path.v[-1], "speed_error": path.speed_error(M),
           "escaping": bool(bounds.escaping[0]), "triangle_slack": float(bounds.triangle[0]),
           "strong_slack": float(bounds.strong[0]) if bounds.escaping[0] else None, "steps": len(path.t) - 1}
    return res, files


def run_jacobi(cfg: RunConfig, M: ManifoldModel, out):
    prm = cfg.params
    if prm["init"] not in ("v", "h"):
        raise ConfigError("init must be 'v' or 'h'")
    p = _path_point(M, prm)
    K0 = curvature_sup(M) if prm["K0"] is None else float(prm["K0"])
    J = solve_jacobi(M, SMPoint(p.x[None], p.v[None]), prm["init"], T=float(prm["T"]), h=prm["step"])
    norm = J.norm[:, 0, :]  # (S, q)
    bound = rauch_bound(J.t[:, None], norm[0], J.dnorm[0, 0], K0)
    q = norm.shape[1]
    header = ["t"] + [f"J{i}" for i in range(q)] + [f"rauch{i}" for i in range(q)]
    rows = [[t, *a, *b] for t, a, b in zip(J.t, norm, bound)]
    files = [artifacts.write_csv(out / "jacobi.csv", header, rows)]
    res = {"K0": K0, "final_norm": norm[-1], "min_rauch_slack": float(np.min(check_rauch_bound(J, K0))),
           "frame_gram_error": J.frame.gram_error(M), "max_growth_ratio": float(np.max(norm / (J.t[:, None] + 1)))}
    return res, files


def run_transform(cfg: RunConfig, M: ManifoldModel, out):
    prm = cfg.params
    f = field_from_spec(M, cfg.field)
    seeds = _seeds(M, prm["seeds"], cfg.rng())
    tr = xray_transform(M, f, seeds, float(prm["tol"]))
    n = M.dim
    header = [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + \
        ["value", "quad_error", "tail_bound", "horizon"]
    rows = [[*x, *v, a, b, c, d] for x, v, a, b, c, d in
            zip(seeds.x, seeds.v, tr.value, tr.quad_error, tr.tail_bound, tr.horizon)]
    files = [artifacts.write_csv(out / "transform.csv", header, rows)]
    res = {"n": len(rows), "max_abs": float(np.max(np.abs(tr.value))),
           "max_error_budget": float(np.max(tr.quad_error + tr.tail_bound)), "order": f.order}
    return res, files


def run_harmonics(cfg: RunConfig, M: ManifoldModel, out):
    prm = cfg.params
    if M.dim != 2:
        raise ConfigError("fibre harmonics are implemented for 2-D models")
    nx, ny = _grid_shape(prm["grid"])
    grid = SMGrid(float(prm["box"]), nx, ny, int(prm["ntheta"]))
    kmax, check = int(prm["kmax"]), prm["check"]
    rng = cfg.rng()
    funcs = []
    if prm["function"] == "random":
        funcs = [random_band_limited(grid, kmax, rng) for _ in range(int(prm["samples"]))]
    elif prm["function"] == "potential":
        h = bump(2, [0.3, -0.2], 1.0)
        f = sym_nabla(M, h)
        R = min(1.4, grid.max_support_radius())
        funcs = [sample(M, grid, lambda x, v: uf(M, f, SMPoint(x, v), 1e-8).value, support_radius=R)]
    else:
        raise ConfigError("function must be 'random' or 'potential'")
    rows, res = [], {}
    if check == "contraction":
        worst = {}
        for i, u in enumerate(funcs):
            rep = contraction_check(M, u, kmax)
            for k, r in rep.ratios.items():
                rows.append([i, k, r, rep.slack()[k]])
                worst[k] = max(worst.get(k, 0.0), r)
        header = ["sample", "k", "ratio", "slack"]
        res = {"max_ratio": {str(k): v for k, v in worst.items()}}
    elif check == "eigen":
        for i, u in enumerate(funcs):
            rows += [[i, k, d] for k, d in eigen_defect(u, kmax).items()]
        header = ["sample", "k", "eigen_defect"]
        res = {"max_defect": max(r[2] for r in rows)}
    elif check == "splitting":
        rows = [[i, norm_splitting_check(M, u, kmax)] for i, u in enumerate(funcs)]
        header = ["sample", "norm_gap"]
        res = {"min_gap": min(r[1] for r in rows)}
    elif check == "recursion":
        for i, u in enumerate(funcs):
            rep = recursion_check(M, u, 1, kmax)
            rows += [[i, k, rep.residuals[k], rep.mode_energy[k]] for k in rep.residuals]
        header = ["sample", "k", "residual", "mode_energy"]
        res = {"max_residual": max(r[2] for r in rows), "max_mode_energy": max(r[3] for r in rows)}
    else:
        raise ConfigError("check must be contraction, eigen, splitting or recursion")
    files = [artifacts.write_csv(out / "harmonics.csv", header, rows)]
    return res, files


def _default_truth(m: int) -> dict:
    if m == 0:
        return {"preset": "gaussian", "center": [0.2, -0.1], "width": 0.35}
    h = {"preset": "poly_bump", "center": [0.1, 0.05], "radius": 0.7, "power": 4}
    if m >= 2:
        h.update(order=m - 1, polarization=[1.0, 0.5])
    return {"preset": "potential_of", "h": h}


def run_reconstruct(cfg: RunConfig, M: ManifoldModel, out):
    from .experiments import recon_experiment

    prm = cfg.params
    if M.dim != 2:
        raise ConfigError("reconstruction is implemented for 2-D models")
    m = int(prm["order"])
    if m < 0 or m > 2:
        raise ConfigError("order must be 0, 1 or 2")
    nx, ny = _grid_shape(prm["grid"])
    if nx != ny:
        raise ConfigError("reconstruction grids are square")
    truth = field_from_spec(M, prm["truth"])
    if truth.order != m:
        raise ConfigError(f"truth has order {truth.order}, expected {m}")
    t0 = time.perf_counter()
    grid, op, ft, res = recon_experiment(M, m, truth, nx, int(prm["seeds"]), cfg.rng(), float(prm["rtol"]),
                                         int(prm["max_iter"]), float(prm["support_radius"]))
    elapsed = time.perf_counter() - t0
    est = to_grid(grid, res.estimate, m)  # (nx, ny, m+1)
    nodes = grid.nodes
    header = ["x", "y"] + [f"f{j}" for j in range(m + 1)]
    rows = [[*nodes[i, j], *est[i, j]] for i in range(grid.nx) for j in range(grid.ny)]
    files = [artifacts.write_csv(out / "estimate.csv", header, rows),
             artifacts.write_csv(out / "residual_history.csv", ["iteration", "residual"],
                                 list(enumerate(res.history)))]
    out_res = {"order": m, "residual": res.residual, "iterations": res.iterations, "converged": res.converged,
               "error": relative_error(grid, res.estimate, ft, m), "defect": res.defect,
               "rows": op.shape[0], "columns": op.shape[1], "empty_rows": len(op.empty_rows)}
    return out_res, files, {"reconstruct": elapsed}


def run_verify_all(cfg: RunConfig, M: ManifoldModel, out):
    from .experiments import run_all

    results = run_all(cfg.seed, bool(cfg.params["quick"]))
    header = ["check", "passed", "value", "threshold"]
    rows = [[r.name, "PASS" if r.passed else "FAIL", r.value, r.threshold] for r in results]
    files = [artifacts.write_csv(out / "checks.csv", header, rows)]
    timings = {r.name: r.seconds for r in results}
    res = {"checks": [r.to_dict() for r in results], "passed": sum(r.passed for r in results),
           "failed": [r.name for r in results if not r.passed]}
    return res, files, timings


RUNNERS = {"geodesic": run_geodesic, "jacobi": run_jacobi, "transform": run_transform,
           "harmonics": run_harmonics, "reconstruct": run_reconstruct, "verify-all": run_verify_all}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill preset defaults so the echoed config is self-contained."""
    if cfg.command == "transform":
        cfg.field = _field_spec(cfg.field, {"preset": "gaussian"})
    if cfg.command == "reconstruct":
        cfg.params["truth"] = _field_spec(cfg.params["truth"], _default_truth(int(cfg.params["order"])))
    return cfg


def run(cfg: RunConfig, stream=None) -> int:
    """Execute one configured run; returns the process exit status."""
    stream = sys.stdout if stream is None else stream
    out = Path(cfg.out_dir)
    report = {"command": cfg.command, "status": "ok", "config": None, "versions": artifacts.versions(),
              "timings": {}, "results": {}, "artifacts": []}
    t0 = time.perf_counter()
    code = 0
    try:
        cfg = resolve(cfg)
        report["config"] = cfg.to_dict()
        M = parse_model(cfg.model)
        with np.errstate(over="raise", invalid="ignore", divide="ignore"):
            got = RUNNERS[cfg.command](cfg, M, out)
        res, files = got[0], got[1]
        if len(got) > 2:
            report["timings"].update(got[2])
        report["results"] = res
        report["artifacts"] = sorted(p.name for p in files)
        if cfg.command == "verify-all" and res["failed"]:
            raise ChecksFailed(res["failed"])
    except ChecksFailed as exc:
        report["status"] = "failed"
        code = _fail(out, report, exc, stream, 2)
    except NUMERICAL_ERRORS as exc:
        report["status"] = "error"
        code = _fail(out, report, exc, stream, 2)
    except INPUT_ERRORS as exc:
        report["status"] = "error"
        code = _fail(out, report, exc, stream, 1)
    report["timings"]["total"] = time.perf_counter() - t0
    if report["config"] is None:
        report["config"] = cfg.to_dict()
    artifacts.write_report(out / "report.json", report)
    if code == 0:
        print(_summary(report), file=stream)
    return code


def _fail(out, report, exc, stream, code) -> int:
    report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    diag = {"error": report["error"], "traceback": traceback.format_exc()}
    extra = getattr(exc, "diagnostics", None)
    if extra:
        diag["diagnostics"] = extra
    if report.get("results"):
        diag["results"] = report["results"]
    artifacts.atomic_write_text(out / "diagnostics.json", artifacts.dump_json(diag))
    report["artifacts"] = sorted(set(report["artifacts"]) | {"diagnostics.json"})
    print(f"chxray {report['command']}: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    if report["command"] == "verify-all" and report.get("results"):
        for c in report["results"]["checks"]:
            print(("PASS " if c["passed"] else "FAIL ") + c["name"], file=stream)
    return code


def _summary(report) -> str:
    if report["command"] == "verify-all":
        return "\n".join(("PASS " if c["passed"] else "FAIL ") + c["name"] for c in report["results"]["checks"])
    keys = ", ".join(f"{k}={v}" for k, v in artifacts.to_jsonable(report["results"]).items()
                     if not isinstance(v, (list, dict)))
    return f"chxray {report['command']}: {keys}"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chxray", description="Geodesic X-ray transform experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config; flags given here override it")
        p.add_argument("--model", help="euclidean[:n] | hyperbolic:K0[:n] | warped:<preset>")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--seed", type=int)

    for name in ("geodesic", "jacobi"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--x", help="base point, comma separated")
        p.add_argument("--v", help="direction, comma separated")
        p.add_argument("--T", type=float)
        p.add_argument("--step", type=float)
        if name == "jacobi":
            p.add_argument("--init", choices=["v", "h"])
            p.add_argument("--K0", type=float)
    p = sub.add_parser("transform")
    common(p)
    p.add_argument("--field", help="preset name or JSON object")
    p.add_argument("--seeds", help="random:N:R or file:path.csv")
    p.add_argument("--tol", type=float)
    p = sub.add_parser("harmonics")
    common(p)
    p.add_argument("--function", choices=["random", "potential"])
    p.add_argument("--kmax", type=int)
    p.add_argument("--check", choices=["contraction", "eigen", "splitting", "recursion"])
    p.add_argument("--grid", help="nx:ny")
    p.add_argument("--box", type=float)
    p.add_argument("--ntheta", type=int)
    p.add_argument("--samples", type=int)
    p = sub.add_parser("reconstruct")
    common(p)
    p.add_argument("--order", type=int)
    p.add_argument("--truth", help="preset name or JSON object")
    p.add_argument("--grid", help="nx:ny")
    p.add_argument("--seeds", type=int)
    p.add_argument("--rtol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--support-radius", dest="support_radius", type=float)
    p.add_argument("--ridge", type=float)
    p = sub.add_parser("verify-all")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--quick", dest="quick", action="store_true", default=None)
    g.add_argument("--full", dest="quick", action="store_false")
    return ap


_TOP = ("model", "out_dir", "seed")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {"command": args.command}
    if args.config:
        base = RunConfig.load(args.config)
        if base.command != args.command:
            raise ConfigError(f"config is for {base.command!r}, not {args.command!r}")
        data = base.to_dict()
        data["params"] = {k: v for k, v in data["params"].items()}
    for key in _TOP:
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "field", None) is not None:
        data["field"] = args.field
    skip = set(_TOP) | {"command", "config", "field"}
    params = dict(data.get("params", {}))
    for key, val in vars(args).items():
        if key not in skip and val is not None:
            params[key] = val
    data["params"] = params
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"chxray {args.command}: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
