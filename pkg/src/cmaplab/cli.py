"""Command-line experiment runner: INI configs in, field files + sorted-key JSON/CSV reports out."""

import argparse
import configparser
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import constraint_map as cm
from . import geometry as geo
from . import global2d as g2
from . import obstacle as ob
from . import potential as pot
from . import regularity as reg
from .errors import CmapError, ConfigParse, Io
from .fields import Grid, ScalarField, read_field, write_field

EXIT_CODES = {"ConfigParse": 2, "Io": 3}
KINDS = ("solve-obstacle", "solve-map", "regularity", "global2d", "potential", "reproduce-example")


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _bool(text):
    low = text.strip().lower()
    if low not in ("true", "false", "yes", "no", "1", "0"):
        raise ValueError(f"not a boolean: {text!r}")
    return low in ("true", "yes", "1")


# section -> key -> parser; anything else in a config file is rejected
SCHEMA = {
    "experiment": {"kind": str, "output": str},
    "grid": {"extents": _floats, "n": _ints, "h": float},
    "target": {"kind": str, "ambient_dim": int, "tubular_halfwidth": float},
    "solver": {"tol": float, "max_iter": int, "omega": float, "multilevel": _bool},
    "obstacle": {"problem": str, "radius": float, "source": float, "point": _floats},
    "map": {"problem": str},
    "regularity": {"scales": _floats, "sigma": float, "degree": int, "gap": _bool,
                   "source": float, "image_field": str},
    "global2d": {"kind": str, "a": float, "alpha": float, "beta": float, "rotation": float,
                 "width": float, "c0": float, "samples": int},
    "potential": {"modulus": str, "delta": float, "alpha_exp": float, "cells": int, "r_count": int},
    "example": {"h": float},
}

DEFAULTS = {
    "solve-obstacle": {
        "grid": {"extents": [-1.0, 1.0, -1.0, 1.0], "n": [256, 256]},
        "solver": {"tol": 1e-4, "max_iter": 50000, "omega": 1.5, "multilevel": True},
        "obstacle": {"problem": "radial", "radius": 0.5, "source": 1.0},
        "regularity": {"scales": [0.25, 0.125, 0.0625, 0.03125]},
    },
    "solve-map": {
        "grid": {"extents": [-1.0, 1.0, -1.0, 1.0], "n": [129, 129]},
        "target": {"kind": geo.SPHERE, "ambient_dim": 2},
        "solver": {"tol": 1e-6, "max_iter": 200000, "multilevel": True},
        "map": {"problem": "extruded"},
    },
    "regularity": {
        "regularity": {"scales": [0.25, 0.125, 0.0625, 0.03125], "sigma": 0.5, "degree": 1, "gap": True,
                       "source": 1.0},
    },
    "global2d": {
        "global2d": {"kind": g2.ELLIPSE, "a": 0.5, "alpha": 0.3, "beta": 0.1, "rotation": 0.0,
                     "width": 0.0, "c0": 4.0, "samples": 10000},
    },
    "potential": {
        "potential": {"modulus": "power", "delta": 0.05, "alpha_exp": 0.5, "cells": 100000,
                      "r_count": 5},
    },
    "reproduce-example": {
        "example": {"h": 2.0 ** -10},
        "solver": {"tol": 1e-6, "max_iter": 200000},
    },
}


def parse_config(text, kind=None):
    """Parse INI text into {section: {key: value}}; unknown sections or keys raise ConfigParse."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParse(str(exc)) from None
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigParse(f"unknown section [{section}]")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigParse(f"unknown key {key!r} in [{section}]")
            try:
                out[section][key] = SCHEMA[section][key](raw.strip().strip('"'))
            except ValueError as exc:
                raise ConfigParse(f"[{section}] {key}: {exc}") from None
    kind = out.get("experiment", {}).get("kind", kind)
    if kind not in KINDS:
        raise ConfigParse(f"experiment kind must be one of {KINDS}, got {kind!r}")
    return resolve(out, kind)


def resolve(cfg, kind):
    """Fill defaults for `kind` and validate tolerances and scales."""
    full = {s: dict(v) for s, v in DEFAULTS[kind].items()}
    for section, values in cfg.items():
        full.setdefault(section, {}).update(values)
    full.setdefault("experiment", {})["kind"] = kind
    full["experiment"].setdefault("output", "out")
    tol = full.get("solver", {}).get("tol", 1.0)
    if not tol > 0:
        raise ConfigParse("solver tol must be positive")
    scales = full.get("regularity", {}).get("scales")
    if scales is not None:
        if not scales or any(s <= 0 for s in scales):
            raise ConfigParse("scales must be positive")
        for big, small in zip(scales, scales[1:]):
            if not math.isclose(big, 2 * small, rel_tol=1e-9):
                raise ConfigParse("scales must be dyadic and decreasing")
    return full


def load_config(path, kind=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise Io(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, kind)


# ---------------------------------------------------------------- output helpers

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _outdir(cfg):
    out = Path(cfg["experiment"]["output"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise Io(f"cannot create {out}: {exc.strerror}") from None
    return out


def _write_report(out, report, cfg, name="report.json"):
    report = dict(report, config=cfg)
    (out / name).write_text(dumps(report), encoding="utf-8")
    return report


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _grid(cfg):
    gc = cfg["grid"]
    ext = gc["extents"]
    extents = tuple((ext[2 * k], ext[2 * k + 1]) for k in range(len(ext) // 2))
    if "h" in gc:
        return Grid.uniform(gc["h"], extents)
    n = gc["n"]
    if len(n) != len(extents):
        raise ConfigParse("grid n and extents disagree in dimension")
    return Grid(extents, tuple(n))


# ---------------------------------------------------------------- experiments

def run_obstacle(cfg):
    out = _outdir(cfg)
    grid = _grid(cfg)
    oc, sc = cfg["obstacle"], cfg["solver"]
    if oc["problem"] != "radial":
        raise ConfigParse("obstacle problem must be 'radial'")
    exact = ob.radial_solution(oc["radius"], oc["source"])
    sol = ob.solve_obstacle(oc["source"], exact, grid, tol=sc["tol"], max_iter=sc["max_iter"],
                            omega=sc["omega"], multilevel=sc["multilevel"])
    write_field(out / "w.field", sol.w)
    fb = sol.fb_coords()
    x0 = oc.get("point", [oc["radius"], 0.0])
    profile = []
    if len(fb):
        x0 = fb[np.argmin(np.linalg.norm(fb - np.asarray(x0), axis=1))]
        profile = ob.min_diam_profile(sol, x0, cfg["regularity"]["scales"])
    _write_csv(out / "min_diam_profile.csv", ["r", "min_diam_ratio"], profile)
    h = grid.h
    err = float(np.max(np.abs(sol.w.values - exact(*grid.coords()))))
    radii = np.hypot(fb[:, 0], fb[:, 1]) if len(fb) else np.array([np.nan])
    report = {"residual": sol.residual, "iterations": sol.iterations, "converged": sol.converged,
              "fb_point_count": len(fb), "min_diam_profile": profile, "profile_point": x0,
              "sup_error_over_h2": err / h ** 2,
              "fb_radius_error_over_h": float(np.max(np.abs(radii - oc["radius"]))) / h}
    return _write_report(out, report, cfg)


def _map_problem(cfg, grid):
    problem = cfg["map"]["problem"]
    if problem == "example":
        return cm.example_dirichlet()
    if problem == "extruded":
        # the 1D example extended constantly in y
        return lambda x, *rest: cm.example_map(x)
    raise ConfigParse("map problem must be 'example' or 'extruded'")


def run_map(cfg):
    out = _outdir(cfg)
    grid = _grid(cfg)
    tc, sc = cfg["target"], cfg["solver"]
    target = geo.target_from_config(tc["kind"], tc.get("ambient_dim", 2), tc.get("tubular_halfwidth"))
    sol = cm.minimize_energy(target, _map_problem(cfg, grid), grid, tol=sc["tol"],
                             max_iter=sc["max_iter"], omega=sc.get("omega"),
                             multilevel=sc["multilevel"])
    write_field(out / "u.field", sol.u)
    write_field(out / "V.field", sol.V)
    write_field(out / "w.field", sol.w)
    coef = cm.coefficients(target, sol)
    on = sol.contact_mask & coef.valid
    gmin = float(np.min(coef.g.values[on])) if on.any() else None
    report = {"energy": sol.energy, "el_residual": sol.el_residual,
              "contact_fraction": float(sol.contact_mask.mean()), "iterations": sol.iterations,
              "converged": sol.converged, "min_g_on_contact": gmin}
    return _write_report(out, report, cfg)


def _read_points(path):
    try:
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise Io(f"cannot read points {path}: {exc.strerror}") from None
    pts = []
    for row in rows:
        try:
            pts.append([float(v) for v in row])
        except ValueError:
            continue  # header line
    return pts


def _read_field(path):
    try:
        return read_field(path)
    except OSError as exc:
        raise Io(f"cannot read field {path}: {exc.strerror}") from None


def run_regularity(cfg, field_path, points_path):
    out = _outdir(cfg)
    w = _read_field(field_path)
    if not isinstance(w, ScalarField):
        raise ConfigParse("regularity needs a scalar field")
    rc = cfg["regularity"]
    v = None
    if rc.get("image_field"):
        v = _read_field(rc["image_field"])
        if not isinstance(v, ScalarField):
            v = ScalarField(v.grid, v.values[..., 0])
    g = ScalarField(w.grid, np.full(w.grid.shape, rc["source"]))
    rows = []
    for x0 in _read_points(points_path):
        try:
            rep = reg.point_report(w, g, x0, rc["scales"], rc["sigma"], rc["degree"],
                                   rc["gap"] and w.grid.dims == 2, v)
            lam = rep.gap_profile.max_lambda if rep.gap_profile else float("nan")
            rows.append(list(x0) + [rep.exponent, rep.classification,
                                    rep.r0 if rep.r0 is not None else float("nan"), lam,
                                    rep.cubic_ratio])
        except (CmapError, ValueError) as exc:
            code = exc.code if isinstance(exc, CmapError) else "InvalidArgument"
            rows.append(list(x0) + [float("nan"), "error:" + code, float("nan"),
                                    float("nan"), float("nan")])
    coords = ["x", "y"][:w.grid.dims]
    _write_csv(out / "points.csv", coords + ["exponent", "classification", "r0", "max_lambda",
                                             "max_cubic_ratio"], rows)
    report = {"points": len(rows), "classifications": [r[len(coords) + 1] for r in rows]}
    return _write_report(out, report, cfg)


def run_global2d(cfg, verify=True):
    out = _outdir(cfg)
    gc = cfg["global2d"]
    gs = g2.make_global(gc["kind"], gc["a"], gc["alpha"], gc["beta"], gc["rotation"], gc["width"])
    report = dict(gs.describe())
    if verify:
        if gs.kind in g2.CONICS:
            z = g2.conic_boundary_points(gs, 100)
            report["max_schwarz_residual"] = float(np.max(np.abs(g2.schwarz(gs, z) - np.conj(z))))
        else:
            report["max_schwarz_residual"] = None
        report["max_Up_ratio"], report["Up_profile"] = g2.verify_Up(gs, samples=gc["samples"])
        inside = g2.inside_check(gs, gc["c0"])
        report["inside_case"] = inside["alternative"]
        report["inside_report"] = inside
    return _write_report(out, report, cfg)


def _potential_test_function(pc):
    if pc["modulus"] == "power" and pc["alpha_exp"] == 0.5:
        return pot.mollified_power_test_function(pc["delta"])
    if pc["modulus"] == "power" and pc["alpha_exp"] == 1.0:
        return lambda x, y: x
    if pc["modulus"] == "log":
        scale = 1.0 / abs(math.log(pc["delta"]))
        return lambda x, y: scale * x
    raise ConfigParse("built-in test functions exist for power (alpha_exp 0.5 or 1) and log moduli")


def run_potential(cfg, check_bound=True):
    out = _outdir(cfg)
    pc = cfg["potential"]
    modulus = pot.GrowthModulus(pc["modulus"], pc["delta"], pc["alpha_exp"])
    quad = pot.Quadrature.with_cells(pc["cells"])
    f = _potential_test_function(pc)
    report = {"cells": quad.cells,
              "phi_at_origin": pot.potential_phi(f, 0, [0.0, 0.0], quad),
              "grad_at_origin": pot.potential_gradient(f, 0, [0.0, 0.0], quad)}
    if check_bound:
        r_grid = pot.default_r_grid(pc["delta"], pc["r_count"])
        report["max_ratio"], report["per_r_profile"] = pot.verify_quad_bound(modulus, f, 0, r_grid, quad)
    return _write_report(out, report, cfg)


def run_example(cfg):
    out = _outdir(cfg)
    h = cfg["example"]["h"]
    target = geo.TargetManifold.sphere(2)
    rows, errors = [], []
    for step in (h, h / 2):
        grid = Grid.uniform(step, ((-1.0, 1.0),))
        sol = cm.minimize_energy(target, cm.example_dirichlet(), grid, tol=cfg["solver"]["tol"],
                                 max_iter=cfg["solver"]["max_iter"])
        err = float(np.max(np.abs(sol.u.values - cm.example_map(grid.axes()[0]))))
        errors.append(err)
        rows.append([step, err, sol.iterations])
        if step == h:
            write_field(out / "u.field", sol.u)
            left, right = cm.one_sided_third_differences(h, cm.image_angle(sol.V), grid)
    _write_csv(out / "errors.csv", ["h", "sup_error", "iterations"], rows)
    exact_left, exact_right = cm.one_sided_third_differences(h)
    report = {"h": h, "sup_error": errors[0], "sup_error_half": errors[1],
              "error_ratio": errors[0] / errors[1], "theta_third_left": left,
              "theta_third_right": right, "theta_third_left_exact": exact_left,
              "theta_third_right_exact": exact_right}
    return _write_report(out, report, cfg)


def run(cfg, **extra):
    """Run one resolved config; returns the report dict."""
    kind = cfg["experiment"]["kind"]
    if kind == "solve-obstacle":
        return run_obstacle(cfg)
    if kind == "solve-map":
        return run_map(cfg)
    if kind == "regularity":
        return run_regularity(cfg, extra["field"], extra["points"])
    if kind == "global2d":
        return run_global2d(cfg, extra.get("verify", True))
    if kind == "potential":
        return run_potential(cfg, extra.get("check_bound", True))
    return run_example(cfg)


def _error_report(exc):
    code = exc.code if isinstance(exc, CmapError) else "InvalidArgument"
    return {"error": code, "message": str(exc)}


def _exit_code(exc):
    return EXIT_CODES.get(exc.code, 1) if isinstance(exc, CmapError) else 2


def _run_path(path):
    try:
        cfg = load_config(path)
        run(cfg)
        return path, 0, None
    except (CmapError, ValueError) as exc:
        return path, _exit_code(exc), _error_report(exc)


def run_batch(paths):
    """Run configs concurrently (at most CMAP_THREADS workers); returns the worst exit status."""
    workers = int(os.environ.get("CMAP_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(paths)))
    if workers == 1:
        results = [_run_path(p) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_path, paths))
    status = 0
    for path, code, err in results:
        if err:
            sys.stdout.write(dumps(dict(err, config_path=str(path))))
        status = max(status, code)
    return status


# ---------------------------------------------------------------- argument parsing

def _params(text):
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep or key.strip() not in SCHEMA["global2d"]:
            raise ConfigParse(f"bad --params entry {item!r}; use key=value with keys {sorted(SCHEMA['global2d'])}")
        out[key.strip()] = SCHEMA["global2d"][key.strip()](value)
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="cmaplab", description="Constraint-map and obstacle-problem experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, config_required=False):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=config_required, help="INI experiment config")
        p.add_argument("--out", help="output directory (overrides [experiment] output)")
        return p

    add("solve-obstacle", "Solve the scalar obstacle problem; writes w.field, min_diam_profile.csv and report.json.")
    add("solve-map", "Minimise the constrained Dirichlet energy; writes u/V/w fields and report.json.")
    p = add("regularity", "Per-point regularity scan of a sampled w; writes points.csv.")
    p.add_argument("--field", required=True, help="scalar field file holding w")
    p.add_argument("--points", required=True, help="CSV of free-boundary points (one per line)")
    p = add("global2d", "Build a 2D global solution and check its Schwarz function and gradient bound.")
    p.add_argument("--kind", choices=g2.KINDS, help="global solution family")
    p.add_argument("--params", default="", help="comma-separated key=value list (a, alpha, beta, rotation, width, c0, samples)")
    p.add_argument("--verify", action="store_true", help="run the Schwarz, gradient-bound and inside-ball checks")
    p = add("potential", "Quadrature of the normalised Newtonian potential and its growth bound.")
    p.add_argument("--check-bound", action="store_true", help="evaluate the growth-bound ratio over an r grid")
    p.add_argument("--modulus", choices=("power", "log"), help="growth modulus form")
    p.add_argument("--delta", type=float, help="modulus scale delta in (0, 1)")
    p.add_argument("--cells", type=int, help="target number of quadrature cells")
    p = add("reproduce-example", "Solve the 1D example at h and h/2 and report third differences of the angle.")
    p.add_argument("--h", type=float, help="grid spacing on [-1, 1]")
    add("run", "Run any experiment; the kind comes from [experiment] kind.", config_required=True)
    p = sub.add_parser("batch", help="Run several configs concurrently (CMAP_THREADS caps workers).")
    p.add_argument("configs", nargs="+", help="config files")
    return parser


def _config_for(args):
    kind = None if args.command == "run" else args.command
    cfg = load_config(args.config, kind) if args.config else resolve({}, kind)
    if cfg["experiment"]["kind"] != kind and kind is not None:
        raise ConfigParse(f"config kind {cfg['experiment']['kind']!r} does not match {kind!r}")
    if args.out:
        cfg["experiment"]["output"] = args.out
    if args.command == "global2d":
        if args.kind:
            cfg["global2d"]["kind"] = args.kind
        cfg["global2d"].update(_params(args.params))
    if args.command == "potential":
        for key in ("modulus", "delta", "cells"):
            if getattr(args, key) is not None:
                cfg["potential"][key] = getattr(args, key)
    if args.command == "reproduce-example" and args.h is not None:
        cfg["example"]["h"] = args.h
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "batch":
            return run_batch(args.configs)
        cfg = _config_for(args)
        extra = {}
        if cfg["experiment"]["kind"] == "regularity":
            if not getattr(args, "field", None):
                raise ConfigParse("regularity needs --field and --points")
            extra = {"field": args.field, "points": args.points}
        if args.command == "global2d":
            extra["verify"] = args.verify
        if args.command == "potential":
            extra["check_bound"] = args.check_bound
        report = run(cfg, **extra)
        sys.stdout.write(dumps(report))
        return 0
    except (CmapError, ValueError) as exc:
        sys.stdout.write(dumps(_error_report(exc)))
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
