"""Command-line frontend.

Every run is described by one structured document (YAML or JSON). Command
line options only override keys of that document::

    fracspde check-admissible --set variant=example_i --set H=0.8 --set K=0.5
    fracspde solve-heat --config heat.yaml --set M=32 --seed 3 --out runs/heat

Parameters are validated against the command's schema before anything is
computed, and artifacts are written only once the computation succeeded.
Each run leaves ``manifest.json`` with the resolved parameters, seed,
artifact hashes, package versions and timings.

Exit codes: 0 success, 2 validation failure, 3 numerical failure; failures
print a JSON error document on stdout.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict

import numpy as np
import scipy
import yaml

from . import __version__
from .core import (FracSpdeError, NumericalError, SampledPath, SpaceTimeField, SpectralVector,
                   UniformGrid, ValidationError, child_seed, read_path_csv, sine_analyze_array,
                   unit_grid, write_field_csv, write_path_csv)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

# --------------------------------------------------------------------------
# expressions
# --------------------------------------------------------------------------

_EXPR_NAMES = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh", "arctan",
    "pi", "where", "minimum", "maximum", "ones_like", "zeros_like")}


def expression(src: str, variables: tuple) -> Callable:
    """Compile a numpy expression in ``variables`` (e.g. ``"0.5*sin(u)"``).

    Only the names above and the listed variables are visible.
    """
    if not isinstance(src, str) or not src.strip():
        raise ValidationError(f"expression must be a non-empty string, got {src!r}")
    try:
        code = compile(src, "<expr>", "eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {src!r}: {exc.msg}") from exc
    unknown = set(code.co_names) - set(_EXPR_NAMES) - set(variables)
    if unknown:
        raise ValidationError(f"expression {src!r} uses unknown names {sorted(unknown)}")

    def fn(*args):
        env = dict(_EXPR_NAMES)
        env.update(zip(variables, args))
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(args[0])).copy()

    fn.source = src
    return fn


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def _parse_value(text: str):
    return yaml.safe_load(text)


def _set_dotted(doc: dict, key: str, value):
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ValidationError(f"cannot set {key}: {p} is not a section")
    cur[parts[-1]] = value


def load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ValidationError(f"config file {path} does not exist")
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping")
    return doc


@dataclass
class RunConfig:
    command: str
    params: Dict[str, Any]
    seed: int
    out: str


def _schema_check(command, params, schema):
    unknown = set(params) - set(schema)
    if unknown:
        raise ValidationError(f"unknown parameters for {command}: {sorted(unknown)}")
    full = {}
    for key, (default, kind) in schema.items():
        v = params.get(key, default)
        if v is not None and kind is not None:
            try:
                if kind is float:
                    v = float(v)
                elif kind is int:
                    if isinstance(v, float) and not v.is_integer():
                        raise ValueError
                    v = int(v)
                elif kind is bool:
                    if not isinstance(v, bool):
                        raise ValueError
                elif kind is list:
                    v = list(v)
                elif kind is str:
                    v = str(v)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"parameter {key}={v!r} is not a valid {kind.__name__}") from exc
        full[key] = v
    return full


# --------------------------------------------------------------------------
# commands: each returns (prepare, compute)
# --------------------------------------------------------------------------
# ``prepare(params, seed)`` validates and builds inputs without side
# effects; ``compute(state, tmpdir)`` writes artifacts into tmpdir and
# returns a summary dict.

def _require_file(p, key):
    if p[key] is not None and not os.path.exists(p[key]):
        raise ValidationError(f"{key}: file {p[key]} does not exist")


SCHEMAS = {
    "noise": {"kind": ("fbm", str), "H": (0.7, float), "K": (None, float), "n": (1024, int),
              "n_x": (256, int), "t0": (1.0, float), "scale": (1.0, float),
              "replicates": (1, int), "estimate": (True, bool)},
    "frac": {"input": (None, str), "op": ("marchaud_left", str), "eta": (0.5, float),
             "start": ("auto", str)},
    "integrate": {"f": (None, str), "g": (None, str), "eta": (None, float),
                  "include_correction": (True, bool), "sweep": (None, list)},
    "ode": {"z": (None, str), "H": (0.75, float), "n": (4096, int), "a": ("x", str),
            "b": ("0*x", str), "x0": (1.0, float), "eta": (None, float), "tol": (1e-10, float),
            "max_iter": (100, int)},
    "solve-heat": {"M": (32, int), "n_t": (256, int), "t0": (1.0, float), "H": (0.85, float),
                   "K": (0.6, float), "noise": ("sheet", str), "w0": ("sin(pi*x)", str),
                   "F": ("0.5*sin(u)", str), "G": ("sin(u)", str), "u0": ("sin(pi*x)", str),
                   "variant": ("hke", str), "alpha": (None, float), "beta": (None, float),
                   "gamma": (None, float), "delta": (None, float), "epsilon": (0.05, float),
                   "eta": (None, float), "rho": (1.0, float), "tol": (1e-8, float),
                   "max_iter": (60, int), "override_admissibility": (False, bool),
                   "refine": (False, bool), "sheet_nx": (None, int)},
    "solve-transport": {"M": (32, int), "n_t": (256, int), "t0": (1.0, float),
                        "z": ("fbm", str), "H": (0.8, float), "z_expr": ("x", str),
                        "u0": ("sin(pi*x)", str), "beta": (0.25, float), "gamma": (0.2, float),
                        "delta": (0.3, float), "rho": (1.0, float), "tol": (1e-8, float),
                        "max_iter": (60, int), "n_x": (1024, int), "refine": (False, bool)},
    "solve-burgers": {"M": (32, int), "n_t": (256, int), "t0": (1.0, float),
                      "noise": (True, bool), "H": (0.85, float), "K": (0.45, float),
                      "U0": ("exp(-(x-0.5)**2/(2*0.08**2))", str),
                      "eps": ([0.2, 0.1, 0.05, 0.025], list), "scale_constant": (-2.0, float),
                      "sheet_nx": (None, int),
                      "test_functions": ([[0.5, 0.3], [0.3, 0.2], [0.65, 0.25]], list),
                      "residual_times": ([0.25, 0.5, 0.75, 1.0], list)},
    "converge": {"study": ("zahle", str), "levels": ([10, 11, 12, 13, 14], list),
                 "eta": (0.5, float), "holder": (0.7, float), "amplitude": (0.3, float),
                 "workers": (1, int)},
    "check-admissible": {"variant": ("general", str), "alpha": (None, float),
                         "beta": (None, float), "gamma": (None, float), "delta": (None, float),
                         "epsilon": (None, float), "d_S": (1.0, float), "H": (None, float),
                         "K": (None, float), "q_metadata": (None, float)},
}


def _positive(p, *keys):
    for k in keys:
        if p[k] is not None and not p[k] > 0:
            raise ValidationError(f"{k} must be positive")


# noise ----------------------------------------------------------------------

def _prep_noise(p, seed):
    from .noise import NoiseSpec
    _positive(p, "n", "n_x", "t0", "scale", "replicates")
    if p["kind"] not in ("fbm", "fbs", "field"):
        raise ValidationError("kind must be fbm, fbs or field")
    specs = []
    for r in range(p["replicates"]):
        s = seed if p["replicates"] == 1 else child_seed(seed, r)
        tg = UniformGrid(0.0, p["t0"], p["n"]) if p["kind"] != "field" else None
        xg = unit_grid(p["n_x"]) if p["kind"] != "fbm" else None
        specs.append(NoiseSpec(p["H"], tg, xg, p["K"], s, p["scale"]))
    if p["kind"] == "fbs" and p["K"] is None:
        raise ValidationError("fbs needs K")
    return specs


def _run_noise(specs, p, out):
    from .noise import estimate_holder, fbm_field_1d, fbm_path, fbs_sheet
    sidecar = {"replicates": []}
    files = []
    for r, spec in enumerate(specs):
        name = f"noise_{r:03d}.csv" if len(specs) > 1 else "noise.csv"
        entry = {"file": name, "spec": spec.as_dict()}
        if p["kind"] == "fbm":
            path = fbm_path(spec)
            write_path_csv(os.path.join(out, name), path)
            if p["estimate"] and spec.t_grid.n >= 255:
                est = estimate_holder(path)
                entry["holder_estimate"] = est.__dict__
        elif p["kind"] == "field":
            vals = fbm_field_1d(spec)
            write_path_csv(os.path.join(out, name), SampledPath(spec.x_grid, vals))
        else:
            fld = fbs_sheet(spec)
            write_field_csv(os.path.join(out, name), fld)
            entry["method"] = fld.meta["method"]
        sidecar["replicates"].append(entry)
        files.append(name)
    with open(os.path.join(out, "noise.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return {"artifacts": files + ["noise.json"]}


# frac -----------------------------------------------------------------------

FRAC_OPS = ("rl_left", "rl_right", "marchaud_left", "marchaud_right")


def _prep_frac(p, seed):
    from .fraccalc import FracOrder
    if p["input"] is None:
        raise ValidationError("frac needs input=<csv file>")
    _require_file(p, "input")
    if p["op"] not in FRAC_OPS:
        raise ValidationError(f"op must be one of {FRAC_OPS}")
    FracOrder(p["eta"])
    if p["op"].startswith("rl") and p["eta"] == 0:
        raise ValidationError("integral of order 0 is not defined; use eta in (0, 1]")
    if p["start"] not in ("auto", "singular", "linear"):
        raise ValidationError("start must be auto, singular or linear")
    return read_path_csv(p["input"])


def _run_frac(path, p, out):
    from . import fraccalc as fc
    target = os.path.join(out, "result.csv")
    if p["eta"] == 0 and p["op"].startswith("marchaud"):
        shutil.copyfile(p["input"], target)  # D^0 is the identity
        return {"artifacts": ["result.csv"], "identity": True}
    op = p["op"]
    if op == "rl_left":
        res = fc.riemann_liouville_left(path, p["eta"])
    elif op == "rl_right":
        res = fc.riemann_liouville_right(path, p["eta"])
    elif op == "marchaud_left":
        res = fc.weyl_marchaud_left(path, p["eta"], start=p["start"])
    else:
        res = fc.weyl_marchaud_right(path, p["eta"], start=p["start"])
    write_path_csv(target, res)
    return {"artifacts": ["result.csv"]}


# integrate ------------------------------------------------------------------

def _prep_integrate(p, seed):
    from .stieltjes import IntegralConfig
    for k in ("f", "g"):
        if p[k] is None:
            raise ValidationError(f"integrate needs {k}=<csv file>")
        _require_file(p, k)
    f, g = read_path_csv(p["f"]), read_path_csv(p["g"])
    if f.grid != g.grid:
        raise ValidationError("f and g must share one grid")
    IntegralConfig(eta=p["eta"])
    if p["sweep"] is not None:
        for e in p["sweep"]:
            IntegralConfig(eta=float(e))
    return f, g


def _run_integrate(fg, p, out):
    from .stieltjes import (IntegralConfig, default_eta, riemann_stieltjes_left, zahle_integral,
                            zahle_integral_eta_sweep)
    f, g = fg
    eta = p["eta"] if p["eta"] is not None else default_eta(f, g)
    val = zahle_integral(f, g, IntegralConfig(eta=eta, include_correction=p["include_correction"]))
    res = {"value": val, "eta": eta, "rs_left": riemann_stieltjes_left(f, g), "n": f.grid.n}
    if p["sweep"]:
        vals, spread = zahle_integral_eta_sweep(f, g, [float(e) for e in p["sweep"]],
                                                p["include_correction"])
        res["sweep"] = {"eta": [float(e) for e in p["sweep"]], "values": vals, "spread": spread}
    with open(os.path.join(out, "integral.json"), "w") as fh:
        json.dump(res, fh, indent=2, sort_keys=True)
    return {"artifacts": ["integral.json"], "value": val}


# ode ------------------------------------------------------------------------

def _prep_ode(p, seed):
    from .noise import NoiseSpec, fbm_path
    from .stieltjes import OdeProblem
    a = expression(p["a"], ("x", "t"))
    b = expression(p["b"], ("x", "t"))
    if p["z"] is not None:
        _require_file(p, "z")
        z = read_path_csv(p["z"])
    else:
        _positive(p, "n")
        z = None
    prob = dict(a=a, b=b, x0=p["x0"], max_iter=p["max_iter"], tol=p["tol"], eta=p["eta"])
    OdeProblem(z=None, **prob)  # validates tol / max_iter
    if z is None:
        z = fbm_path(NoiseSpec(p["H"], UniformGrid(0.0, 1.0, p["n"]), seed=seed))
    return OdeProblem(z=z, **prob)


def _run_ode(prob, p, out):
    from .stieltjes import solve_fractional_ode
    res = solve_fractional_ode(prob)
    write_path_csv(os.path.join(out, "solution.csv"), res.path)
    write_path_csv(os.path.join(out, "driver.csv"), prob.z)
    tr = {"deltas": res.deltas, "residual": res.residual, "eta": res.eta,
          "holder_estimate": res.holder_estimate, "iterations": res.iterations}
    with open(os.path.join(out, "transcript.json"), "w") as fh:
        json.dump(tr, fh, indent=2, sort_keys=True)
    return {"artifacts": ["solution.csv", "driver.csv", "transcript.json"],
            "iterations": res.iterations}


# solve-heat -----------------------------------------------------------------

def _grid_coeffs(fn, M):
    xg = unit_grid(4 * M)
    vals = fn(xg.nodes)
    return sine_analyze_array(vals, M, check_boundary=False)


def _prep_heat(p, seed):
    from .mild import AdmissibilityParams, NonlinearitySpec, SolverConfig, sheet_exponents
    _positive(p, "M", "n_t", "t0")
    if p["noise"] not in ("sheet", "smooth"):
        raise ValidationError("noise must be sheet or smooth")
    F = None if p["F"] in ("0", "none", None) else expression(p["F"], ("u",))
    G = None if p["G"] in ("0", "none", None) else expression(p["G"], ("u",))
    spec = NonlinearitySpec(F, G)
    given = {k: p[k] for k in ("alpha", "beta", "gamma", "delta")}
    if all(v is None for v in given.values()):
        ap = sheet_exponents(p["H"], p["K"], variant=p["variant"], epsilon=p["epsilon"])
    else:
        if any(v is None for v in given.values()):
            raise ValidationError("give all of alpha, beta, gamma, delta or none")
        ap = AdmissibilityParams(p["variant"], epsilon=p["epsilon"], H=p["H"], K=p["K"], **given)
    cfg = SolverConfig(M=p["M"], n_t=p["n_t"], t0=p["t0"], eta=p["eta"], rho=p["rho"],
                       tol=p["tol"], max_iter=p["max_iter"],
                       override_admissibility=p["override_admissibility"])
    from .mild import check_admissible
    rep = check_admissible(ap)
    if not rep.ok and not cfg.override_admissibility:
        raise ValidationError("admissibility check failed: " + "; ".join(
            c["condition"] for c in rep.checks if not c["holds"]))
    u0 = SpectralVector(_grid_coeffs(expression(p["u0"], ("x",)), p["M"]))
    w0 = expression(p["w0"], ("x",)) if p["noise"] == "smooth" else None
    sheet_nx = p["sheet_nx"] or 4 * p["M"]
    levels = [1, 2] if p["refine"] else [1]
    if sheet_nx % (2 * levels[-1] * p["M"]) or sheet_nx < 2 * levels[-1] * p["M"]:
        raise ValidationError("sheet_nx must be a multiple of 2*M at every refinement level")
    return dict(spec=spec, ap=ap, cfg=cfg, u0=u0, w0=w0, seed=seed, levels=levels,
                sheet_nx=sheet_nx)


def _heat_driver(state, M, n_t):
    from .noise import NoiseSpec, fbs_sheet, spatial_derivative_array
    cfg = state["cfg"]
    tg = UniformGrid(0.0, cfg.t0, n_t)
    if state["w0"] is not None:
        wc = _grid_coeffs(state["w0"], M)
        return np.outer(tg.nodes, wc)
    fine = state.get("_sheet")
    if fine is None:
        top = state["levels"][-1]
        nt_f = cfg.n_t * top
        spec = NoiseSpec(state["ap"].H, UniformGrid(0.0, cfg.t0, nt_f), unit_grid(state["sheet_nx"]),
                         state["ap"].K, state["seed"])
        fine = state["_sheet"] = fbs_sheet(spec)
    step = fine.t_grid.n // n_t
    return spatial_derivative_array(fine.data[::step], M)


def _run_heat(state, p, out):
    from dataclasses import replace
    from .mild import solve_semilinear_heat, weighted_norm
    cfg0 = state["cfg"]
    table = []
    result = None
    for lv in state["levels"]:
        cfg = replace(cfg0, M=cfg0.M * lv, n_t=cfg0.n_t * lv)
        u0 = state["u0"] if lv == 1 else SpectralVector(
            _grid_coeffs(expression(p["u0"], ("x",)), cfg.M))
        z = _heat_driver(state, cfg.M, cfg.n_t)
        res = solve_semilinear_heat(u0, state["spec"], z, state["ap"], cfg)
        nrm = weighted_norm(res.coeffs, cfg.t_grid, state["ap"].gamma, 1.0, "W", state["ap"].delta)
        table.append({"M": cfg.M, "n_t": cfg.n_t, "W_norm": nrm,
                      "iterations": res.transcript["iterations"], "rho": res.transcript["rho"],
                      "contraction_factor": res.transcript["contraction_factor"]})
        if result is None:
            result = res
    for row in table[1:]:
        row["rel_change"] = abs(row["W_norm"] - table[0]["W_norm"]) / abs(row["W_norm"])
    tr = dict(result.transcript)
    tr["refinement_table"] = table
    write_field_csv(os.path.join(out, "solution.csv"), result.field)
    with open(os.path.join(out, "transcript.json"), "w") as fh:
        json.dump(_jsonable(tr), fh, indent=2, sort_keys=True)
    return {"artifacts": ["solution.csv", "transcript.json"],
            "contraction_factor": tr["contraction_factor"]}


# solve-transport ------------------------------------------------------------

def _prep_transport(p, seed):
    from .mild import AdmissibilityParams, SolverConfig, check_admissible
    _positive(p, "M", "n_t", "t0", "n_x")
    if p["z"] not in ("fbm", "expr", "zero"):
        raise ValidationError("z must be fbm, expr or zero")
    ap = AdmissibilityParams("transport", beta=p["beta"], gamma=p["gamma"], delta=p["delta"],
                             H=p["H"])
    rep = check_admissible(ap)
    if not rep.ok:
        raise ValidationError("transport admissibility failed: " + "; ".join(
            c["condition"] for c in rep.checks if not c["holds"]))
    cfg = SolverConfig(M=p["M"], n_t=p["n_t"], t0=p["t0"], rho=p["rho"], tol=p["tol"],
                       max_iter=p["max_iter"])
    zfn = expression(p["z_expr"], ("x",)) if p["z"] == "expr" else None
    ufn = expression(p["u0"], ("x",))
    if p["n_x"] < 4 * p["M"] * (2 if p["refine"] else 1):
        raise ValidationError("n_x must be at least 4*M at every level")
    return dict(ap=ap, cfg=cfg, zfn=zfn, ufn=ufn, seed=seed)


def _run_transport(state, p, out):
    from dataclasses import replace
    from .mild import TransportProblem, solve_transport, weighted_norm
    from .noise import NoiseSpec, fbm_field_1d
    xz = unit_grid(p["n_x"])
    if p["z"] == "fbm":
        zv = fbm_field_1d(NoiseSpec(p["H"], x_grid=xz, seed=state["seed"]))
    elif p["z"] == "expr":
        zv = state["zfn"](xz.nodes)
    else:
        zv = np.zeros(xz.n + 1)
    table, result = [], None
    for lv in ([1, 2] if p["refine"] else [1]):
        cfg = replace(state["cfg"], M=state["cfg"].M * lv, n_t=state["cfg"].n_t * lv)
        u0 = SpectralVector(_grid_coeffs(state["ufn"], cfg.M))
        res = solve_transport(u0, TransportProblem(u0, zv), state["ap"], cfg)
        ap = state["ap"]
        table.append({"M": cfg.M, "n_t": cfg.n_t,
                      "C_norm": weighted_norm(res.coeffs, cfg.t_grid, ap.gamma, 1.0, "C", 1 + ap.delta),
                      "iterations": res.transcript["iterations"]})
        result = result or res
    write_field_csv(os.path.join(out, "solution.csv"), result.field)
    write_path_csv(os.path.join(out, "z.csv"), SampledPath(xz, zv))
    tr = dict(result.transcript)
    tr["refinement_table"] = table
    with open(os.path.join(out, "transcript.json"), "w") as fh:
        json.dump(_jsonable(tr), fh, indent=2, sort_keys=True)
    return {"artifacts": ["solution.csv", "z.csv", "transcript.json"]}


# solve-burgers --------------------------------------------------------------

def _prep_burgers(p, seed):
    from .burgers import BurgersProblem, TestFunction, hypothesis_report
    from .mild import SolverConfig
    _positive(p, "M", "n_t", "t0")
    U0 = expression(p["U0"], ("x",))
    eps = [float(e) for e in p["eps"]]
    phis = []
    for item in p["test_functions"]:
        if len(item) != 2:
            raise ValidationError("test_functions entries are [center, width]")
        phis.append(TestFunction(float(item[0]), float(item[1])))
    if p["noise"]:
        hyp = hypothesis_report(p["H"], p["K"])
        if not hyp["ok"]:
            raise ValidationError("noise indices violate " + "; ".join(
                c["condition"] for c in hyp["checks"] if not c["holds"]))
    cfg = SolverConfig(M=p["M"], n_t=p["n_t"], t0=p["t0"])
    tg = cfg.t_grid
    for t in p["residual_times"]:
        i = round(float(t) / tg.h)
        if abs(i * tg.h - float(t)) > 1e-9 or not 0 <= i <= tg.n:
            raise ValidationError(f"residual time {t} is not a grid node")
    BurgersProblem(U0, eps_seq=eps, t0=p["t0"], scale_constant=p["scale_constant"])
    n_sheet = p["n_t"] * round((p["t0"] + 1) / p["t0"]) if p["noise"] else None
    if p["noise"] and abs(n_sheet * p["t0"] / p["n_t"] - (p["t0"] + 1)) > 1e-9:
        raise ValidationError("t0 + 1 must be a whole number of time steps")
    return dict(U0=U0, eps=eps, phis=phis, cfg=cfg, seed=seed, n_sheet=n_sheet)


def _run_burgers(state, p, out):
    from .burgers import BurgersProblem, cole_hopf, solve_half_noise_heat, weak_residual
    from .noise import NoiseSpec, fbs_sheet
    cfg = state["cfg"]
    B = None
    if p["noise"]:
        nx = p["sheet_nx"] or cfg.product_grid.n
        B = fbs_sheet(NoiseSpec(p["H"], UniformGrid(0.0, p["t0"] + 1.0, state["n_sheet"]),
                                unit_grid(nx), p["K"], state["seed"]))
    prob = BurgersProblem(state["U0"], B, p["H"] if B is not None else None,
                          p["K"] if B is not None else None, state["eps"], p["t0"],
                          scale_constant=p["scale_constant"])
    w, rec = solve_half_noise_heat(prob, cfg)
    u = cole_hopf(w, p["scale_constant"])
    write_field_csv(os.path.join(out, "w.csv"), w)
    write_field_csv(os.path.join(out, "u.csv"), u)
    with open(os.path.join(out, "residuals.csv"), "w") as fh:
        fh.write("center,width,t,residual\n")
        for phi in state["phis"]:
            for t in p["residual_times"]:
                r = weak_residual(u, rec["B_effective"], phi, float(t))
                fh.write(f"{phi.center:.17g},{phi.width:.17g},{float(t):.17g},{r:.17g}\n")
    diag = {k: v for k, v in rec.items() if k != "B_effective"}
    with open(os.path.join(out, "eps.json"), "w") as fh:
        json.dump(_jsonable(diag), fh, indent=2, sort_keys=True)
    return {"artifacts": ["w.csv", "u.csv", "residuals.csv", "eps.json"], "min_w": rec["min_w"]}


# converge -------------------------------------------------------------------

def _prep_converge(p, seed):
    from .stieltjes import IntegralConfig
    if p["study"] != "zahle":
        raise ValidationError("only study=zahle is available")
    lv = [int(v) for v in p["levels"]]
    IntegralConfig(eta=p["eta"], refinement_levels=lv)
    if min(lv) < 8 or max(lv) > 20:
        raise ValidationError("levels must lie in 8..20")
    _positive(p, "workers")
    return lv


def _converge_level(args):
    level, eta, holder, amplitude = args
    from .noise import weierstrass_path
    from .stieltjes import IntegralConfig, riemann_stieltjes_left, zahle_integral
    w = weierstrass_path(UniformGrid(0.0, 1.0, 2 ** level), holder, amplitude)
    val = zahle_integral(w, w, IntegralConfig(eta=eta))
    rs = riemann_stieltjes_left(w, w)
    return {"n": 2 ** level, "eta": eta, "value": val, "rs_oracle": rs, "abs_diff": abs(val - rs)}


def _run_converge(levels, p, out):
    jobs = [(lv, p["eta"], p["holder"], p["amplitude"]) for lv in levels]
    if p["workers"] > 1:
        with ProcessPoolExecutor(p["workers"]) as ex:
            rows = list(ex.map(_converge_level, jobs))  # map keeps index order
    else:
        rows = [_converge_level(j) for j in jobs]
    with open(os.path.join(out, "converge.csv"), "w") as fh:
        fh.write("n,eta,value,rs_oracle,abs_diff\n")
        for r in rows:
            fh.write(f"{r['n']},{r['eta']:.17g},{r['value']:.17g},{r['rs_oracle']:.17g},"
                     f"{r['abs_diff']:.17g}\n")
    d = np.array([r["abs_diff"] for r in rows])
    n = np.array([r["n"] for r in rows], dtype=float)
    rate = float(-np.polyfit(np.log2(n), np.log2(d), 1)[0]) if len(rows) > 1 else None
    return {"artifacts": ["converge.csv"], "rate": rate,
            "monotone": bool(np.all(np.diff(d) < 0))}


# check-admissible -----------------------------------------------------------

def _prep_admissible(p, seed):
    from .mild import AdmissibilityParams
    return AdmissibilityParams(**p)


def _run_admissible(ap, p, out):
    from .mild import check_admissible
    rep = check_admissible(ap)
    doc = {"params": ap.as_dict(), **rep.as_dict()}
    with open(os.path.join(out, "admissibility.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return {"artifacts": ["admissibility.json"], "ok": rep.ok}


COMMANDS = {
    "noise": (_prep_noise, _run_noise),
    "frac": (_prep_frac, _run_frac),
    "integrate": (_prep_integrate, _run_integrate),
    "ode": (_prep_ode, _run_ode),
    "solve-heat": (_prep_heat, _run_heat),
    "solve-transport": (_prep_transport, _run_transport),
    "solve-burgers": (_prep_burgers, _run_burgers),
    "converge": (_prep_converge, _run_converge),
    "check-admissible": (_prep_admissible, _run_admissible),
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (SpaceTimeField, SampledPath)):
        return None
    return obj


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run(cfg: RunConfig) -> dict:
    """Validate, compute and write the artifacts of one run.

    Returns the manifest. Raises :class:`ValidationError` or
    :class:`NumericalError`; nothing is written to ``cfg.out`` in that case.
    """
    if cfg.command not in COMMANDS:
        raise ValidationError(f"unknown command {cfg.command!r}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    prep, compute = COMMANDS[cfg.command]
    params = _schema_check(cfg.command, cfg.params, SCHEMAS[cfg.command])
    t_start = time.perf_counter()
    state = prep(params, cfg.seed)
    t_valid = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        summary = compute(state, params, tmp)
        t_done = time.perf_counter()
        os.makedirs(cfg.out, exist_ok=True)
        artifacts = []
        for name in summary.pop("artifacts"):
            shutil.move(os.path.join(tmp, name), os.path.join(cfg.out, name))
            artifacts.append({"path": name, "sha256": _sha256(os.path.join(cfg.out, name))})
    inputs = {k: _sha256(v) for k, v in params.items()
              if isinstance(v, str) and k in ("input", "f", "g", "z") and os.path.isfile(v)}
    manifest = {
        "command": cfg.command,
        "params": params,
        "seed": cfg.seed,
        "artifacts": artifacts,
        "inputs_sha256": inputs,
        "summary": _jsonable(summary),
        "versions": {"fracspde": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "timings": {"validate_s": t_valid - t_start, "compute_s": t_done - t_valid,
                    "total_s": time.perf_counter() - t_start},
    }
    with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
    return manifest


def build_parser():
    ap = argparse.ArgumentParser(prog="fracspde", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML or JSON parameter document")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a parameter (dotted keys address sections)")
    ap.add_argument("--seed", type=int, help="root seed (overrides the document)")
    ap.add_argument("--out", help="output directory (default: runs/<command>)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        for item in args.set:
            if "=" not in item:
                raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            _set_dotted(doc, k.strip(), _parse_value(v))
        seed = args.seed if args.seed is not None else doc.pop("seed", 0)
        doc.pop("seed", None)
        out = args.out or doc.pop("out", None) or os.path.join("runs", args.command)
        doc.pop("out", None)
        doc.pop("command", None)
        params = doc.get("params", doc) if isinstance(doc.get("params"), dict) else doc
        manifest = run(RunConfig(args.command, params, int(seed), out))
    except ValidationError as exc:
        _emit_error("validation", exc)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        _emit_error("numerical", exc)
        return EXIT_NUMERICAL
    print(json.dumps({"status": "ok", "command": args.command, "out": out,
                      "summary": manifest["summary"]}, sort_keys=True))
    return EXIT_OK


def _emit_error(kind, exc):
    diag = getattr(exc, "diagnostics", None)
    print(json.dumps({"status": "error", "kind": kind, "type": type(exc).__name__,
                      "message": str(exc), "diagnostics": _jsonable(diag)}, sort_keys=True,
                     default=str))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
