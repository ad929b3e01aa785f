"""Command line front end.

Every computation is driven by a JSON config validated against a schema
before anything runs; flags only choose paths and verbosity.  Exit codes:
0 on success, 1 for configuration errors, 2 when a solve does not converge
or a residual misses its tolerance (artifacts and reports are still
written).  Diagnostics are printed to stderr as JSON.

``SEMIFLAT_THREADS`` caps the BLAS/OpenMP thread count.
"""

from __future__ import annotations

import os

if "SEMIFLAT_THREADS" in os.environ:  # must happen before numpy loads BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SEMIFLAT_THREADS"])

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import develop, g2fib, gauge, nahm, octonion, toda
from .lie_core import principal_sl2

log = logging.getLogger("semiflat")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class StageFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_COMPLEX = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]}
_SIGNS = {"type": "array", "items": {"enum": [1, -1]}}


def _obj(props: dict, required: tuple[str, ...] = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


GRID_SCHEMA = _obj(
    {
        "nx": {"type": "integer", "minimum": 8},
        "ny": {"type": "integer", "minimum": 8},
        "lx": {"type": "number", "exclusiveMinimum": 0},
        "ly": {"type": "number", "exclusiveMinimum": 0},
        "topology": {"enum": ["rectangle", "torus"]},
        "x0": _NUM,
        "y0": _NUM,
    },
    ("nx", "ny", "lx", "ly"),
)

Q_SCHEMA = _obj(
    {"degree": {"type": "integer", "minimum": 1}, "coeffs": {"type": "array", "items": _COMPLEX, "minItems": 1}, "center": _COMPLEX},
    ("coeffs",),
)

PARAMS_SCHEMA = _obj(
    {
        "r": {"type": "integer", "minimum": 1},
        "mu": _SIGNS,
        "diagram": {"type": "string"},
        "k": {"type": "array", "items": _COMPLEX},
        "k0_weighted": {"type": "boolean"},
        "eps": {"enum": [1, -1]},
        "eps_chain": _SIGNS,
        "rep": {"type": "string"},
        "rep_params": _obj(
            {
                "eps0": {"enum": [1, -1]},
                "eps_chain": _SIGNS,
                "eps_top": {"enum": [1, -1]},
                "eps": {"enum": [1, -1]},
                "r": {"type": "integer", "minimum": 1},
                "parity": {"enum": ["even", "odd"]},
                "scale": _NUM,
            }
        ),
    }
)

INIT_SCHEMA = _obj(
    {
        "kind": {"enum": ["zero", "constant", "plane_wave"]},
        "value": {"type": "array", "items": _NUM},
        "beta": _NUM,
        "w0": {"type": "array", "items": _NUM},
        "dw0": {"type": "array", "items": _NUM},
        "perturb": _obj(
            {"amplitude": _NUM, "shape": {"enum": ["bump", "random", "random_bump"]}},
            ("amplitude",),
        ),
    },
    ("kind",),
)

FAMILIES = [
    "tzitzeica",
    "uniformizing",
    "sinh_gordon",
    "d2_signed",
    "d23_superconformal",
    "b1_odd_definite",
    "b1_odd_split",
    "general",
    "cyclic",
]

TODA_SCHEMA = _obj(
    {
        "family": {"enum": FAMILIES},
        "diagram": {"type": "string"},
        "signs": _SIGNS,
        "params": PARAMS_SCHEMA,
        "grid": GRID_SCHEMA,
        "q": Q_SCHEMA,
        "init": INIT_SCHEMA,
        "seed": _INT,
        "order": {"enum": [2, 4]},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 1},
    },
    ("family", "grid", "q"),
)

GAUGE_OPTS = _obj(
    {
        "order": {"enum": [2, 4]},
        "curvature_tol": {"type": "number", "exclusiveMinimum": 0},
        "real_form": {"type": "boolean"},
        "holonomy_sides": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    }
)

DEVELOP_OPTS = _obj(
    {
        "section": _INT,
        "loop_tol": {"type": ["number", "null"]},
        "harmonic_r": {"type": "integer", "minimum": 1},
        "affine_sphere": {"type": "boolean"},
        "obj_coords": {"type": "array", "items": _INT, "minItems": 3, "maxItems": 3},
        "tol": _obj(
            {
                "quadric": _NUM,
                "tension": _NUM,
                "w_error": _NUM,
                "q_error": _NUM,
                "orthogonality": _NUM,
                "shape_operator": _NUM,
            }
        ),
    }
)

DEVELOP_TOL = {"quadric": 1e-6, "tension": 1e-4, "w_error": 1e-4, "q_error": 1e-4, "orthogonality": 1e-6, "shape_operator": 1e-3}

GAUGE_SCHEMA = _obj({"toda": TODA_SCHEMA, "gauge": GAUGE_OPTS}, ("toda",))
DEVELOP_SCHEMA = _obj({"toda": TODA_SCHEMA, "gauge": GAUGE_OPTS, "develop": DEVELOP_OPTS}, ("toda",))

G2_TOL = _obj({"tension": _NUM, "dpsi": _NUM, "dphi": _NUM, "cone_metric": _NUM})

CONE_OPTS = _obj(
    {
        "r_start": {"type": "number", "exclusiveMinimum": 0},
        "r_stop": {"type": "number", "exclusiveMinimum": 0},
        "nr": {"type": "integer", "minimum": 5},
        "variant": {"enum": ["compact", "split"]},
        "tau": {"type": "number", "exclusiveMinimum": 0},
    },
    ("r_start", "r_stop"),
)

G2_BUILD_SCHEMA = {
    "oneOf": [
        _obj(
            {
                "kind": {"const": "linear"},
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 3, "maxItems": 3},
                "lower": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "upper": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "basis": {"enum": ["self_dual", "anti_self_dual"]},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "variant": {"enum": ["compact", "split"]},
            },
            ("kind", "shape", "lower", "upper"),
        ),
        _obj(
            {"kind": {"const": "cone"}, "toda": TODA_SCHEMA, "gauge": GAUGE_OPTS, "develop": DEVELOP_OPTS, "cone": CONE_OPTS},
            ("kind", "toda", "cone"),
        ),
    ]
}

G2_VERIFY_SCHEMA = _obj({"order": {"enum": [2, 4]}, "tol": G2_TOL})

MATRIX = {"type": "array", "items": {"type": "array", "items": _COMPLEX}}

NAHM_SCHEMA = _obj(
    {
        "initial": _obj(
            {
                "kind": {"enum": ["random", "su2", "matrices"]},
                "n": {"type": "integer", "minimum": 1},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "real_form": {"enum": ["compact", "higgs", "complex"]},
                "a": _NUM,
                "b": _NUM,
                "c": _NUM,
                "A": MATRIX,
                "phi1": MATRIX,
                "phi2": MATRIX,
            },
            ("kind",),
        ),
        "seed": _INT,
        "x_span": _NUM,
        "step": {"type": "number", "exclusiveMinimum": 0},
        "monitor_every": {"type": "integer", "minimum": 1},
        "csv_every": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
    },
    ("initial", "x_span", "step"),
)

PIPELINE_SCHEMA = _obj(
    {
        "toda": TODA_SCHEMA,
        "gauge": GAUGE_OPTS,
        "develop": DEVELOP_OPTS,
        "cone": CONE_OPTS,
        "g2": G2_VERIFY_SCHEMA,
    },
    ("toda", "cone"),
)


def _error_key(err: jsonschema.ValidationError) -> str:
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path = list(err.absolute_path) + extra[:1]
    elif err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        path = list(err.absolute_path) + missing[:1]
    else:
        path = list(err.absolute_path)
    return ".".join(str(p) for p in path) or "<root>"


def validate(config: Any, schema: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if not errors:
        return
    err = errors[0]
    # a oneOf failure hides the useful message in its context
    while err.context:
        err = max(err.context, key=lambda e: len(list(e.absolute_path)))
    raise ConfigError(f"{_error_key(err)}: {err.message}", _error_key(err))


def load_config(path: str | Path, schema: dict) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    validate(config, schema)
    return config


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _matrix(m) -> np.ndarray:
    rows = [[_complex(v) for v in row] for row in m]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths")
    return np.array(rows, dtype=complex)


def build_system(cfg: dict) -> toda.TodaSystem:
    family = cfg["family"]
    params = dict(cfg.get("params", {}))
    # top-level shorthands for the two most common parameters
    if "diagram" in cfg:
        if family != "general":
            raise ConfigError("only family 'general' takes a diagram", "diagram")
        params["diagram"] = cfg["diagram"]
    if "signs" in cfg:
        key = {"d2_signed": "mu", "b1_odd_definite": "eps_chain", "b1_odd_split": "eps_chain"}.get(family)
        if key is None:
            raise ConfigError(f"family {family!r} takes no sign pattern", "signs")
        params[key] = cfg["signs"]
    qcfg = cfg["q"]
    coeffs = tuple(_complex(c) for c in qcfg["coeffs"])
    try:
        if family == "cyclic":
            if "rep" not in params:
                raise ConfigError("family 'cyclic' requires params.rep", "params.rep")
            rep, rep_params = params.pop("rep"), params.pop("rep_params", {})
            if params:
                raise ConfigError(f"family 'cyclic' does not take {sorted(params)}", f"params.{sorted(params)[0]}")
            model = gauge.representation_model(rep, **rep_params)
            degree = qcfg.get("degree", model.rep.M + 1)
            q = toda.HoloDifferential(degree, coeffs, _complex(qcfg.get("center", 0.0)))
            return gauge.cyclic_system(rep, q, **rep_params)
        if "k" in params:
            params["k"] = [_complex(v) for v in params["k"]]
        probe = toda.make_system(family, 1.0, **dict(params))
        degree = qcfg.get("degree", probe.q.degree)
        q = toda.HoloDifferential(degree, coeffs, _complex(qcfg.get("center", 0.0)))
        return toda.make_system(family, q, **params)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot build Toda system: {exc}", "params") from None


def build_grid(cfg: dict) -> toda.Grid2D:
    return toda.Grid2D.from_extent(
        cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"], cfg.get("topology", "rectangle"), cfg.get("x0", 0.0), cfg.get("y0", 0.0)
    )


def _bump(grid: toda.Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    lx = grid.dx * (grid.nx - 1)
    ly = grid.dy * (grid.ny - 1)
    return np.sin(np.pi * (X - grid.x0) / lx) * np.sin(np.pi * (Y - grid.y0) / ly)


def initial_field(system: toda.TodaSystem, grid: toda.Grid2D, cfg: dict, seed: int) -> toda.ScalarField2D:
    C = system.n_channels
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        field_ = toda.ScalarField2D.zeros(grid, system.channels)
    elif kind == "constant":
        value = np.asarray(cfg.get("value", [0.0] * C), float)
        if value.shape != (C,):
            raise ConfigError(f"init.value needs {C} entries", "init.value")
        field_ = toda.ScalarField2D(grid, np.broadcast_to(value[:, None, None], (C,) + grid.shape).copy(), system.channels)
    else:
        for key in ("w0", "dw0"):
            if key in cfg and len(cfg[key]) != C:
                raise ConfigError(f"init.{key} needs {C} entries", f"init.{key}")
        try:
            field_ = toda.plane_wave_solution(system, grid, cfg.get("beta", 0.0), cfg.get("w0"), cfg.get("dw0"))
        except ValueError as exc:
            raise ConfigError(f"plane-wave init: {exc}", "init.kind") from None
    pert = cfg.get("perturb")
    if pert:
        rng = np.random.default_rng(seed)
        shape = pert.get("shape", "bump")
        if shape == "bump":
            delta = np.broadcast_to(_bump(grid), field_.values.shape)
        elif shape == "random":
            delta = rng.standard_normal(field_.values.shape)
        else:
            delta = rng.standard_normal(field_.values.shape) * _bump(grid)
        field_ = field_.copy(field_.values + pert["amplitude"] * delta)
    return field_


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_solve(cfg: dict, out: Path) -> tuple[toda.TodaSystem, toda.ScalarField2D, dict]:
    system = build_system(cfg)
    grid = build_grid(cfg["grid"])
    init = initial_field(system, grid, cfg.get("init", {"kind": "zero"}), cfg.get("seed", 0))
    sol = toda.solve_newton(
        system, init, tol=cfg.get("tol", 1e-10), max_iters=cfg.get("max_iters", 50), order=cfg.get("order", 2)
    )
    meta = {k: sol.metadata[k] for k in ("converged", "iterations", "history", "tol", "laplacian_order", "family")}
    if "diagnostic" in sol.metadata:
        meta["diagnostic"] = sol.metadata["diagnostic"]
    meta["system"] = system.describe()
    meta["grid"] = grid.to_json()
    toda.write_field_csv(out / "solution.csv", sol, sidecar=_jsonable(meta))
    report = {"stage": "solve", "ok": bool(sol.metadata["converged"]), **meta}
    write_json(out / "solve_report.json", report)
    return system, sol, report


def stage_flatness(system, sol, opts: dict, out: Path) -> tuple[gauge.ConnectionField, dict]:
    order = opts.get("order", sol.metadata.get("laplacian_order", 2))
    conn = gauge.assemble_connection(system, sol, order=order)
    cr = gauge.curvature(conn)
    report: dict = {"stage": "flatness", "rep": conn.rep_label, "curvature": cr.to_json()}
    tol = opts.get("curvature_tol", 1e-5)
    ok = cr.max_interior < tol
    if opts.get("real_form", True):
        try:
            report["real_form"] = gauge.verify_real_form(conn)
        except ValueError as exc:
            report["real_form"] = {"skipped": str(exc)}
    if opts.get("holonomy_sides"):
        report["holonomy"] = develop.holonomy_report(conn, sides=tuple(opts["holonomy_sides"]))
    report["tol"] = tol
    report["ok"] = bool(ok)
    write_json(out / "flatness_report.json", report)
    return conn, report


def stage_develop(system, sol, conn, opts: dict, out: Path) -> tuple[develop.ImmersionSample, dict]:
    imm = develop.develop_immersion(conn, section=opts.get("section"), loop_tol=opts.get("loop_tol", 1e-3))
    report: dict = {"stage": "develop", **imm.report()}
    report["signature"] = imm.signature
    report["h0"] = imm.h0
    if "harmonic_r" in opts:
        hs = develop.harmonic_sequence(imm, opts["harmonic_r"])
        mask = conn.grid.interior_mask(hs.margin)
        hrep: dict = {"superminimal": hs.superminimal, "margin": hs.margin}
        w = hs.w_recovered()
        if w.shape[0] == sol.n_channels:
            hrep["w_error"] = [float(np.abs(w[i] - sol.values[i])[mask].max()) for i in range(w.shape[0])]
        if hs.q_recovered is not None:
            qs = conn.q_samples
            hrep["q_squared_abs_error"] = float(np.abs(np.abs(hs.q_recovered) - np.abs(qs) ** 2)[mask].max())
        hrep.update(hs.orthogonality_defects(imm.gram))
        report["harmonic_sequence"] = hrep
    if opts.get("affine_sphere"):
        report["affine_sphere"] = develop.affine_sphere_check(imm)
    develop.write_points_csv(out / "points.csv", imm)
    coords = opts.get("obj_coords", [0, 1, 2])
    if max(coords) >= imm.points.shape[-1]:
        raise ConfigError(f"develop.obj_coords must be below {imm.points.shape[-1]}", "develop.obj_coords")
    develop.write_obj(out / "mesh.obj", imm, coords)
    tol = {**DEVELOP_TOL, **opts.get("tol", {})}
    measured = {}
    if "quadric" in report:
        measured["quadric"] = report["quadric"]
        measured["tension"] = report["tension"]
    hrep = report.get("harmonic_sequence", {})
    if "w_error" in hrep:
        measured["w_error"] = max(hrep["w_error"])
    if "q_squared_abs_error" in hrep:
        measured["q_error"] = hrep["q_squared_abs_error"]
    if "hermitian" in hrep:
        measured["orthogonality"] = max(hrep["hermitian"], hrep["isotropic"])
    if "affine_sphere" in report:
        measured["shape_operator"] = report["affine_sphere"]["shape_operator_deviation"]
    report["tol"] = {k: tol[k] for k in measured}
    report["failed"] = sorted(k for k, v in measured.items() if not v < tol[k])
    report["ok"] = not report["failed"]
    write_json(out / "develop_report.json", report)
    return imm, report


def _cone_field(imm, opts: dict) -> g2fib.ImmersionField3D:
    nr = opts.get("nr", imm.grid.nx)
    r = np.linspace(opts["r_start"], opts["r_stop"], nr)
    return g2fib.cone_extend(imm, r, opts.get("variant", "compact"), opts.get("tau", 1.0))


def g2_report(field_: g2fib.ImmersionField3D, cfg: dict) -> dict:
    order = cfg.get("order", 2)
    tol = {"tension": 1e-3, "dpsi": 1e-3, "dphi": 1e-8, **cfg.get("tol", {})}
    st = g2fib.assemble_g2_forms(field_, order=order)
    mask = field_.grid.interior_mask(st.margin)
    tension = np.linalg.norm(g2fib.tension_field(field_, order=order), axis=-1)
    res = {**st.residuals(), "tension": float(tension[mask].max())}
    ok = all(res[k] < tol[k] for k in ("tension", "dpsi", "dphi"))
    return {"stage": "g2", "residuals": res, "tol": tol, "order": order, "variant": field_.variant, "tau": field_.tau, "ok": bool(ok)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_toda_solve(args) -> int:
    cfg = load_config(args.config, TODA_SCHEMA)
    out = _outdir(args)
    _, _, report = stage_solve(cfg, out)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_CONVERGENCE


def cmd_gauge_verify(args) -> int:
    cfg = load_config(args.config, GAUGE_SCHEMA)
    out = _outdir(args)
    system, sol, srep = stage_solve(cfg["toda"], out)
    conn, report = stage_flatness(system, sol, cfg.get("gauge", {}), out)
    (out / "connection.json").write_text(json.dumps(_jsonable(conn.to_json()), sort_keys=True))
    _emit(report)
    return EXIT_OK if srep["ok"] and report["ok"] else EXIT_CONVERGENCE


def cmd_develop(args) -> int:
    cfg = load_config(args.config, DEVELOP_SCHEMA)
    out = _outdir(args)
    system, sol, srep = stage_solve(cfg["toda"], out)
    conn, frep = stage_flatness(system, sol, cfg.get("gauge", {}), out)
    _, report = stage_develop(system, sol, conn, cfg.get("develop", {}), out)
    _emit(report)
    return EXIT_OK if srep["ok"] and frep["ok"] and report["ok"] else EXIT_CONVERGENCE


def cmd_octo(args) -> int:
    if args.action == "table":
        table = octonion.multiplication_table()
        width = max(len(e) for row in table for e in row) + 1
        for row in table:
            print("".join(e.rjust(width) for e in row))
        return EXIT_OK
    forms = octonion.g2_forms()
    rep = principal_sl2("g2_7dim")
    report = {
        "stabilizer_dimension": octonion.stabilizer_dimension(),
        "phi_monomials": forms.monomials(),
        "principal_sl2_defects": rep.commutator_defects(),
    }
    _emit(report)
    return EXIT_OK if report["stabilizer_dimension"] == 14 else EXIT_CONVERGENCE


def cmd_g2_build(args) -> int:
    cfg = load_config(args.config, G2_BUILD_SCHEMA)
    out = _outdir(args)
    if cfg["kind"] == "linear":
        grid = g2fib.Grid3D.box(cfg["shape"], cfg["lower"], cfg["upper"])
        basis = g2fib.SELF_DUAL if cfg.get("basis", "self_dual") == "self_dual" else g2fib.ANTI_SELF_DUAL
        field_ = g2fib.ImmersionField3D(grid, g2fib.linear_field(grid, basis), cfg.get("tau", 1.0), cfg.get("variant", "compact"))
        report = {"stage": "build", "kind": "linear", "ok": True}
    else:
        system, sol, srep = stage_solve(cfg["toda"], out)
        conn, frep = stage_flatness(system, sol, cfg.get("gauge", {}), out)
        imm, _ = stage_develop(system, sol, conn, cfg.get("develop", {}), out)
        field_ = _cone_field(imm, cfg["cone"])
        report = {"stage": "build", "kind": "cone", "ok": bool(srep["ok"] and frep["ok"])}
        report["cone_metric_defect"] = g2fib.cone_metric_defect(imm, field_)
    g2fib.write_u_csv(out / "u.csv", field_)
    report["grid"] = field_.grid.to_json()
    write_json(out / "build_report.json", report)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_CONVERGENCE


def cmd_g2_verify(args) -> int:
    cfg = load_config(args.config, G2_VERIFY_SCHEMA) if args.config else {}
    out = _outdir(args)
    try:
        field_ = g2fib.read_u_csv(args.u)
    except (OSError, ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"cannot read u-field {args.u}: {exc}", "u") from None
    report = g2_report(field_, cfg)
    write_json(out / "g2_report.json", report)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_CONVERGENCE


def _nahm_initial(cfg: dict, seed: int) -> nahm.NahmState:
    kind = cfg["kind"]
    if kind == "random":
        rng = np.random.default_rng(seed)
        return nahm.random_traceless_state(cfg.get("n", 2), rng, cfg.get("scale", 0.3), cfg.get("real_form", "compact"))
    if kind == "su2":
        return nahm.su2_triple(cfg.get("a", 0.3), cfg.get("b", 0.5), cfg.get("c", 0.8))
    missing = [k for k in ("A", "phi1", "phi2") if k not in cfg]
    if missing:
        raise ConfigError(f"initial.{missing[0]} is required for kind 'matrices'", f"initial.{missing[0]}")
    try:
        return nahm.NahmState(_matrix(cfg["A"]), _matrix(cfg["phi1"]), _matrix(cfg["phi2"]))
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}", "initial") from None


def cmd_nahm_run(args) -> int:
    cfg = load_config(args.config, NAHM_SCHEMA)
    out = _outdir(args)
    state0 = _nahm_initial(cfg["initial"], cfg.get("seed", 0))
    tol = cfg.get("tol", 1e-8)
    report: dict = {"stage": "nahm", "n": state0.n, "x_span": cfg["x_span"], "step": cfg["step"], "tol": tol}
    every = cfg.get("csv_every", 100)
    try:
        traj = nahm.integrate(state0, cfg["x_span"], cfg["step"])
    except nahm.NahmBlowupError as exc:
        report.update(ok=False, blowup={"x": exc.x, "norm": exc.norm, "x_estimate": exc.x_blowup})
        nahm.write_trajectory_csv(out / "trajectory.csv", exc.trajectory, every)
        write_json(out / "nahm_report.json", report)
        _emit(report)
        return EXIT_CONVERGENCE
    drift = nahm.curve_drift(traj, every=cfg.get("monitor_every", 100))
    curve = nahm.spectral_curve(state0)
    nahm.write_trajectory_csv(out / "trajectory.csv", traj, every)
    nahm.write_curve_csv(out / "curve.csv", curve)
    report.update(drift=drift, trace_drift=traj.monitor["trace_drift"], curve=curve.to_json())
    report["ok"] = bool(drift["curve"] < tol and drift["traces"] < tol)
    write_json(out / "nahm_report.json", report)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_CONVERGENCE


def run_pipeline(cfg: dict, out: Path) -> dict:
    """solve -> flatness -> develop -> cone -> g2 verify.

    Each stage writes its report as soon as it finishes; a failing stage
    records the failure and stops the chain.
    """
    stages: list[dict] = []
    summary = {"pipeline": "d23-to-g2", "stages": stages, "ok": False}

    def record(rep: dict) -> None:
        stages.append({"stage": rep["stage"], "ok": rep["ok"]})
        write_json(out / "pipeline_report.json", summary)
        if not rep["ok"]:
            raise StageFailure(rep["stage"])

    try:
        system, sol, srep = stage_solve(cfg["toda"], out)
        record(srep)
        conn, frep = stage_flatness(system, sol, cfg.get("gauge", {}), out)
        record(frep)
        imm, drep = stage_develop(system, sol, conn, cfg.get("develop", {}), out)
        record(drep)
        try:
            cone = _cone_field(imm, cfg["cone"])
        except ValueError as exc:
            crep = {"stage": "cone", "ok": False, "error": str(exc)}
            write_json(out / "cone_report.json", crep)
            record(crep)
        g2fib.write_u_csv(out / "u.csv", cone)
        ctol = cfg.get("g2", {}).get("tol", {}).get("cone_metric", 1e-6)
        defect = g2fib.cone_metric_defect(imm, cone)
        crep = {"stage": "cone", "metric_defect": defect, "tol": ctol, "ok": bool(defect < ctol)}
        write_json(out / "cone_report.json", crep)
        record(crep)
        grep = g2_report(cone, cfg.get("g2", {}))
        write_json(out / "g2_report.json", grep)
        record(grep)
        summary["ok"] = True
    except StageFailure:
        pass
    except (develop.NonFlatConnectionError, develop.FrameBlowupError, develop.HarmonicSequenceError, g2fib.DegenerateMetricError) as exc:
        name = ["solve", "flatness", "develop", "cone", "g2"][len(stages)]
        rep = {"stage": name, "ok": False, "error": str(exc)}
        write_json(out / f"{name}_report.json", rep)
        stages.append({"stage": name, "ok": False})
    write_json(out / "pipeline_report.json", summary)
    return summary


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, PIPELINE_SCHEMA)
    if cfg["toda"]["family"] not in ("d23_superconformal", "d2_signed", "cyclic"):
        raise ConfigError("d23-to-g2 needs a family developing into R^{3,3}", "toda.family")
    out = _outdir(args)
    summary = run_pipeline(cfg, out)
    _emit(summary)
    return EXIT_OK if summary["ok"] else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(report: dict) -> None:
    print(json.dumps(_jsonable(report), sort_keys=True))


def _diagnostic(kind: str, message: str, key: str | None = None) -> None:
    payload = {"status": kind, "message": message}
    if key is not None:
        payload["key"] = key
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiflat", description="Toda fields, flat connections and semi-flat G2 structures.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_io(p: argparse.ArgumentParser, func: Callable, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--out", default="semiflat_out", help="output directory")
        p.set_defaults(func=func)

    p = sub.add_parser("toda", help="solve an affine Toda system")
    tsub = p.add_subparsers(dest="action", required=True)
    with_io(tsub.add_parser("solve"), cmd_toda_solve)

    p = sub.add_parser("gauge", help="assemble the flat connection and report curvature")
    gsub = p.add_subparsers(dest="action", required=True)
    with_io(gsub.add_parser("verify"), cmd_gauge_verify)

    with_io(sub.add_parser("develop", help="develop a solved field into the model space"), cmd_develop)

    p = sub.add_parser("octo", help="split octonion tables and checks")
    p.add_argument("action", choices=["table", "check"])
    p.set_defaults(func=cmd_octo)

    p = sub.add_parser("g2", help="semi-flat G2 structures")
    g2sub = p.add_subparsers(dest="action", required=True)
    with_io(g2sub.add_parser("build"), cmd_g2_build)
    pv = g2sub.add_parser("verify")
    pv.add_argument("--u", required=True, help="u-field CSV written by 'g2 build'")
    with_io(pv, cmd_g2_verify, config_required=False)

    p = sub.add_parser("nahm", help="integrate the translation-invariant reduction")
    nsub = p.add_subparsers(dest="action", required=True)
    with_io(nsub.add_parser("run"), cmd_nahm_run)

    p = sub.add_parser("pipeline", help="chained experiments")
    p.add_argument("name", choices=["d23-to-g2"])
    with_io(p, cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        _diagnostic("config_error", str(exc), exc.key)
        return EXIT_CONFIG
    except (toda.NewtonConvergenceError, toda.SingularJacobianError, toda.ExponentOverflowError) as exc:
        _diagnostic("convergence_failure", str(exc))
        return EXIT_CONVERGENCE
    except (develop.NonFlatConnectionError, develop.FrameBlowupError, develop.HarmonicSequenceError, g2fib.DegenerateMetricError) as exc:
        _diagnostic("verification_failure", str(exc))
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
