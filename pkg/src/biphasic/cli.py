"""Command-line driver.

Usage::

    biphasic SUBCOMMAND CONFIG.yaml [--out DIR]

Subcommands: ``check-params``, ``solve``, ``mms``, ``coercivity``,
``dependence``, ``truncation``.  Exit status is 1 for configuration
errors, 2 for solver failures and 0 otherwise (hypothesis failures are
reported as warnings).  See ``docs/config.md`` for the schema.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .assembly import LoadData, make_spaces, load_norms
from .exceptions import BiphasicError, ConfigError, ConstraintsNotSatisfied
from .mesh import generate_unit_ball, generate_unit_square, load_mesh
from .params import (
    DataNorms,
    FunctionalConstants,
    NondimParams,
    PhysicalParams,
    check_theorems,
    derive_nondimensional,
)
from .resistivity import (
    Bounds,
    Constant,
    DilatationAffine,
    DisplacementAnisotropic,
    Truncated,
    with_bounds,
)

log = logging.getLogger("biphasic")

FMT = "%.17g"
SUBCOMMANDS = ("check-params", "solve", "mms", "coercivity", "dependence", "truncation")

# analytic presets for body forces and tractions
VECTOR_PRESETS = {
    "zero": None,
    "radial": lambda x: x,
    "sine": lambda x: np.sin(np.pi * x),
}
TRACTION_PRESETS = {
    "zero": None,
    "normal": 1.0,
}


@dataclass
class RunConfig:
    mesh: Any
    pairing: str
    ndp: NondimParams
    fc: FunctionalConstants
    model: Any
    data: LoadData
    data_raw: dict
    solver: dict
    sections: dict
    output: Path
    seed: int = 0
    domain: Optional[dict] = None
    source_path: Optional[Path] = None
    notes: list = field(default_factory=list)


def _section(cfg, name, required=False):
    val = cfg.get(name)
    if val is None:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(name, "must be a mapping")
    return val


def _number(sec, key, where, default=None, required=False):
    if key not in sec or sec[key] is None:
        if required:
            raise ConfigError(f"{where}.{key}", "missing value")
        return default
    try:
        return float(sec[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {sec[key]!r}") from None


def _parse_mesh(sec, base):
    if "file" in sec:
        path = Path(sec["file"])
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError("mesh.file", f"mesh file not found: {path}")
        return load_mesh(path)
    gen = sec.get("generator", "unit_square")
    n = int(_number(sec, "n", "mesh", 8))
    if gen == "unit_square":
        return generate_unit_square(n)
    if gen == "unit_ball":
        return generate_unit_ball(n, int(_number(sec, "dim", "mesh", 3)))
    raise ConfigError("mesh.generator", f"unknown generator {gen!r}")


def _parse_params(sec):
    kinds = [k for k in ("nondim", "groups", "physical") if k in sec]
    if len(kinds) != 1:
        raise ConfigError("params", "give exactly one of nondim, groups, physical")
    kind = kinds[0]
    body = sec[kind]
    where = f"params.{kind}"
    if not isinstance(body, dict):
        raise ConfigError(where, "must be a mapping")
    try:
        if kind == "nondim":
            return NondimParams(
                lambda_=_number(body, "lambda", where, 0.0),
                alpha1=_number(body, "alpha1", where, required=True),
                alpha2=_number(body, "alpha2", where, required=True),
                a0=_number(body, "a0", where, required=True),
                Da=_number(body, "Da", where, required=True),
                phi_f=_number(body, "phi_f", where, required=True),
                phi_s=_number(body, "phi_s", where),
            )
        if kind == "groups":
            keys = ("rho_t", "nu_p", "alpha_t", "LrAr", "Da", "phi_s")
            vals = {k: _number(body, k, where, required=True) for k in keys}
            return NondimParams.from_groups(**vals, lambda_=_number(body, "lambda", where, 0.0))
        keys = ("mu_f", "lambda_f", "young_Y", "nu_p", "rho_f", "R", "P_F", "L_p", "AoverV",
                "LrAr", "K_d")
        vals = {k: _number(body, k, where, required=True) for k in keys}
        phi_f = _number(body, "phi_f", where, required=True)
        return derive_nondimensional(PhysicalParams(**vals), phi_f)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from None


def _parse_model(sec, dim):
    kind = sec.get("type", "constant")
    where = "model"
    try:
        if kind == "constant":
            if "matrix" in sec:
                model = Constant(np.asarray(sec["matrix"], dtype=float))
            else:
                model = Constant.identity(dim, _number(sec, "scale", where, 1.0))
        elif kind == "anisotropic":
            model = DisplacementAnisotropic(
                _number(sec, "a", where, required=True),
                _number(sec, "b", where, required=True),
                _number(sec, "c", where, required=True),
            )
        elif kind == "dilatation":
            model = DilatationAffine(
                _number(sec, "gamma1", where, required=True),
                _number(sec, "gamma2", where, required=True),
            )
        else:
            raise ConfigError("model.type", f"unknown model {kind!r}")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from None
    bounds = sec.get("bounds") or {}
    if bounds:
        unknown = set(bounds) - set(Bounds.__dataclass_fields__)
        if unknown:
            raise ConfigError("model.bounds", f"unknown keys {sorted(unknown)}")
        model = with_bounds(model, **{k: float(v) for k, v in bounds.items()})
    if sec.get("truncate") is not None:
        model = Truncated(model, _number(sec, "truncate", where))
    return model


def _vector_datum(val, name, dim):
    if val is None:
        return None
    if isinstance(val, str):
        if val not in VECTOR_PRESETS:
            raise ConfigError(f"data.{name}", f"unknown preset {val!r}")
        return VECTOR_PRESETS[val]
    arr = np.asarray(val, dtype=float)
    if arr.shape != (dim,):
        raise ConfigError(f"data.{name}", f"expected {dim} components")
    return arr


def _parse_data(sec, dim):
    t = sec.get("T_inf")
    if isinstance(t, str):
        if t not in TRACTION_PRESETS:
            raise ConfigError("data.T_inf", f"unknown preset {t!r}")
        t = TRACTION_PRESETS[t]
    elif isinstance(t, (list, tuple)):
        t = _vector_datum(t, "T_inf", dim)
    elif t is not None:
        t = _number(sec, "T_inf", "data")
    return LoadData(
        b_f=_vector_datum(sec.get("b_f"), "b_f", dim),
        b_s=_vector_datum(sec.get("b_s"), "b_s", dim),
        T_inf=t,
        source=_number(sec, "source", "data"),
    )


def load_config(path, out=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"config file not found: {path}")
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    base = path.parent
    mesh = _parse_mesh(_section(cfg, "mesh", required=True), base)
    pairing = cfg.get("pairing", "P2P1")
    if pairing not in ("P2P1", "P1P1"):
        raise ConfigError("pairing", f"unknown pairing {pairing!r}")
    ndp = _parse_params(_section(cfg, "params", required=True))
    try:
        fc = FunctionalConstants(**_section(cfg, "constants"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("constants", str(exc)) from None
    model = _parse_model(_section(cfg, "model"), mesh.dim)
    data_raw = _section(cfg, "data")
    data = _parse_data(data_raw, mesh.dim)
    solver = _section(cfg, "solver")
    output = Path(out) if out else base / cfg.get("output", "output")
    domain = _section(cfg, "domain") or None
    sections = {k: _section(cfg, k) for k in ("mms", "coercivity", "dependence", "truncation")}
    return RunConfig(mesh, pairing, ndp, fc, model, data, data_raw, solver, sections, output,
                     int(cfg.get("seed", 0)), domain, path)


def _data_norms(rc: RunConfig) -> DataNorms:
    """Explicit domain measures with constant data, else quadrature on the mesh."""
    if rc.domain:
        vol = _number(rc.domain, "volume", "domain", required=True)
        area = _number(rc.domain, "area", "domain", required=True)
        d = rc.data
        for name in ("b_f", "b_s", "T_inf"):
            if callable(getattr(d, name)):
                raise ConfigError(f"data.{name}", "domain measures need constant data")
        src = rc.ndp.a0 if d.source is None else d.source
        return DataNorms.from_constants(
            0.0 if d.b_f is None else list(d.b_f), 0.0 if d.b_s is None else list(d.b_s),
            0.0 if d.T_inf is None else (d.T_inf if np.ndim(d.T_inf) == 0 else list(d.T_inf)),
            src, vol=vol, area=area,
        )
    return load_norms(rc.data, rc.mesh, rc.ndp.a0)


def _model_meta(rc):
    meta = rc.model.declared.as_dict()
    inner = getattr(rc.model, "inner", rc.model)
    meta["gamma2"] = getattr(inner, "gamma2", None)
    return meta


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([FMT % v if isinstance(v, float) else v for v in r])
    Path(path).write_text(buf.getvalue())


def _json(path, obj):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n")


def cmd_check_params(rc: RunConfig):
    rep = check_theorems(rc.ndp, rc.fc, _data_norms(rc), _model_meta(rc))
    (rc.output / "constraints.csv").write_text(rep.to_csv())
    (rc.output / "constraints.txt").write_text(rep.to_text())
    print(rep.to_text(), end="")
    for name, ok in rep.verdicts.items():
        if not ok:
            warnings.warn(f"hypotheses of {name} not verified", UserWarning, stacklevel=2)
    return {"verdicts": rep.verdicts, "constants": rep.constants,
            "failed": rep.failed()}


def _solver_kw(rc):
    s = rc.solver
    kw = {"tol": _number(s, "tol", "solver", 1e-8), "max_iter": int(_number(s, "max_iter", "solver", 50))}
    if "relaxation" in s:
        kw["relaxation"] = _number(s, "relaxation", "solver")
    return kw


def cmd_solve(rc: RunConfig):
    from .solver import picard_case_a, picard_case_b
    from .verify import apriori_audit, solve_model
    from .vtk import write_vtk

    spaces = make_spaces(rc.mesh, rc.pairing)
    kw = _solver_kw(rc)
    if rc.model.iterate_independent:
        sol, rep = solve_model(spaces, rc.ndp, rc.data, rc.model)
    elif rc.model.argument == "dilatation":
        sol, rep = picard_case_b(spaces, rc.ndp, rc.data, rc.model, fc=rc.fc, **kw)
    else:
        sol, rep = picard_case_a(spaces, rc.ndp, rc.data, rc.model, fc=rc.fc, **kw)
    write_vtk(rc.output / "fields.vtk", rc.mesh, {"V_f": sol.V_f, "U_s": sol.U_s, "P": sol.P})
    v, u, p = sol.norms()
    summary = {"norm_V_H1": v, "norm_gradU_L2": u, "norm_P_L2": p, "dofs": spaces.sizes,
               "picard": rep.as_dict() if rep else None}
    b = rc.model.declared
    if b.k1 is not None and b.k2 is not None and math.isfinite(b.k2):
        try:
            audit = apriori_audit(sol, rc.ndp, rc.fc, _data_norms(rc), b)
            summary["apriori"] = audit.as_dict()
            if not audit.holds:
                warnings.warn("a-priori bound not met by the discrete solution", UserWarning,
                              stacklevel=2)
        except BiphasicError as exc:
            summary["apriori"] = {"error": str(exc)}
            warnings.warn(str(exc), UserWarning, stacklevel=2)
    if rep:
        rows = [(i, r.norm_V, r.norm_gradU, r.norm_P, r.step_diff, r.linear_residual)
                for i, r in enumerate(rep.iterates)]
        _write_csv(rc.output / "picard.csv",
                   ["iteration", "norm_V", "norm_gradU", "norm_P", "step_diff", "residual"], rows)
    print(f"solved: |V|_1={v:.6g} |grad U|_0={u:.6g} |P|_0={p:.6g}")
    return summary


def cmd_mms(rc: RunConfig):
    from .verify import build_mms, convergence_study, trig_bubble_fields

    sec = rc.sections["mms"]
    levels = [int(n) for n in sec.get("levels", [8, 16, 32])]
    pairings = sec.get("pairings", [rc.pairing])
    mms = build_mms(trig_bubble_fields(2), rc.ndp, rc.model)
    out = {}
    for pr in pairings:
        table = convergence_study(mms, levels, pr)
        (rc.output / f"rates_{pr}.csv").write_text(table.to_csv())
        out[pr] = table.rates
        print(f"{pr}: " + ", ".join(f"{k}={v:.3f}" for k, v in table.rates.items()))
    return {"rates": out, "levels": levels}


def cmd_coercivity(rc: RunConfig):
    from .verify import coercivity_sample

    sec = rc.sections["coercivity"]
    res = coercivity_sample(
        make_spaces(rc.mesh, rc.pairing), rc.ndp, rc.fc, rc.data, rc.model,
        int(_number(sec, "samples", "coercivity", 100)), seed=rc.seed,
        radius_factor=_number(sec, "radius_factor", "coercivity", 1.1),
    )
    _write_csv(rc.output / "coercivity.csv", ["sample", "pairing"],
               [(i, float(v)) for i, v in enumerate(res.pairings)])
    print(f"min pairing {res.min_pairing:.6g} at r0={res.r0:.6g}: "
          f"{'all positive' if res.all_positive else 'NOT all positive'}")
    if not res.all_positive:
        warnings.warn("coercivity sampling found a non-positive pairing", UserWarning, stacklevel=2)
    return res.as_dict()


def cmd_dependence(rc: RunConfig):
    from .verify import dependence_study

    sec = rc.sections["dependence"]
    case = sec.get("case", "frozen")
    pert = sec.get("perturb") or {"b_f": [1.0] + [0.0] * (rc.mesh.dim - 1)}
    eps_list = [float(e) for e in sec.get("eps", [1e-2, 5e-3, 2.5e-3])]
    dpert = _parse_data({k: pert.get(k) for k in ("b_f", "b_s", "T_inf")}, rc.mesh.dim)
    spaces = make_spaces(rc.mesh, rc.pairing)
    rows = []
    for eps in eps_list:
        d2 = _add_data(rc.data, dpert, eps)
        try:
            res = dependence_study(spaces, rc.data, d2, rc.ndp, rc.model, rc.fc, case)
        except ConstraintsNotSatisfied as exc:
            warnings.warn(str(exc), UserWarning, stacklevel=2)
            res = exc.result
        rows.append((eps, res.sol_diff_sq, res.bound, res.sol_diff_sq / eps**2,
                     str(res.holds), str(res.certified)))
        if not res.holds:
            warnings.warn(f"eps={eps:g}: sol_diff_sq={res.sol_diff_sq:.6g} > bound={res.bound:.6g}",
                          UserWarning, stacklevel=2)
    _write_csv(rc.output / "dependence.csv",
               ["eps", "sol_diff_sq", "bound", "ratio", "holds", "certified"], rows)
    for r in rows:
        print(f"eps={r[0]:g} sol_diff_sq={r[1]:.6g} bound={r[2]:.6g} ratio={r[3]:.6g}")
    return {"case": case, "rows": rows}


def _add_data(base: LoadData, pert: LoadData, eps):
    from .assembly import _traction_values, _vector_values

    def vec(a, b):
        if b is None:
            return a
        return lambda x: _vector_values(a, x) + eps * _vector_values(b, x)

    t = base.T_inf
    if pert.T_inf is not None:
        t = lambda x, n: _traction_values(base.T_inf, x, n) + eps * _traction_values(pert.T_inf, x, n)
    return LoadData(vec(base.b_f, pert.b_f), vec(base.b_s, pert.b_s), t, base.source)


def cmd_truncation(rc: RunConfig):
    from .solver import solve_truncated_continuation

    sec = rc.sections["truncation"]
    sched = sec.get("m_schedule", rc.solver.get("m_schedule"))
    kw = _solver_kw(rc)
    sol, levels = solve_truncated_continuation(
        make_spaces(rc.mesh, rc.pairing), rc.ndp, rc.data, rc.model,
        None if sched is None else [float(m) for m in sched], fc=rc.fc, **kw,
    )
    rows = [(lv.m, str(lv.active), lv.max_K, lv.norm_VP,
             math.nan if lv.vp_bound is None else lv.vp_bound, lv.norm_gradU,
             math.nan if lv.u_bound is None else lv.u_bound, str(lv.within_bounds))
            for lv in levels]
    _write_csv(rc.output / "truncation.csv",
               ["m", "active", "max_K", "norm_VP", "vp_bound", "norm_gradU", "u_bound",
                "within_bounds"], rows)
    for lv in levels:
        print(f"m={lv.m:g} active={lv.active} |(V,P)|={lv.norm_VP:.6g} |grad U|={lv.norm_gradU:.6g}")
    return {"levels": [lv.as_dict() for lv in levels]}


COMMANDS = {
    "check-params": cmd_check_params,
    "solve": cmd_solve,
    "mms": cmd_mms,
    "coercivity": cmd_coercivity,
    "dependence": cmd_dependence,
    "truncation": cmd_truncation,
}


def run(subcommand, config_path, out=None) -> int:
    """Run one subcommand; returns the exit status."""
    try:
        rc = load_config(config_path, out)
        rc.output.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BiphasicError as exc:        # e.g. mesh parse errors
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            summary = COMMANDS[subcommand](rc)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        except BiphasicError as exc:
            print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
    msgs = [str(w.message) for w in caught]
    for m in msgs:
        print(f"warning: {m}", file=sys.stderr)
    _json(rc.output / "summary.json",
          {"command": subcommand, "config": str(rc.source_path), "seed": rc.seed,
           "warnings": msgs, "result": summary})
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="biphasic", description=__doc__.split("\n")[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("config", help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return run(args.subcommand, args.config, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
