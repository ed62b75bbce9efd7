"""Batch runner: one JSON-configured scenario per invocation, CSV tables plus a JSON summary.

    focklab run config.json [--out DIR] [--threads N] [--grid-R X] [--grid-h Y]
    focklab list

Exit status: 0 when the scenario meets its thresholds, 2 when it does not,
1 on any error (invalid config, capacity, numerical failure).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import bergman, fock, localization, matrix, weights
from .numerics import GridSpec, build_grid

DEFAULT_SEED = 42

# ---------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}

_WEIGHT = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["constant", "gaussian", "power", "radial_step", "anisotropic_power", "product"]},
        "value": _NUM, "beta": _NUM, "radius": _NUM, "inner": _NUM, "outer": _NUM,
        "betas": _NUM_LIST, "factors": {"type": "array", "items": {"$ref": "#/definitions/weight"}},
    },
    "additionalProperties": False,
}
_SYMBOL = {
    "type": "object",
    "required": ["symbol"],
    "properties": {
        "symbol": {"enum": ["constant", "indicator_ball", "plane_wave"]},
        "value": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]},
        "radius": _POS, "center": _NUM_LIST, "k": _NUM_LIST,
    },
    "additionalProperties": False,
}
_DISK_WEIGHT = {
    "type": "object",
    "required": ["family"],
    "properties": {"family": {"enum": ["std_radial", "constant"]}, "gamma": _NUM, "c": _POS},
    "additionalProperties": False,
}

SCENARIOS = ("weight-check", "projection-norm", "toeplitz-norm", "berezin-scan", "compactness",
             "counterexample", "wl-profile", "bergman-bp", "bergman-containment", "bergman-hatlemma")

_COMMON = ("scenario", "seed", "params", "grid", "output", "thresholds")


@dataclass(frozen=True)
class Scenario:
    name: str
    summary: str
    required: tuple
    optional: tuple
    defaults: dict
    runner: Callable = field(repr=False)


def _schema() -> dict:
    props = {
        "scenario": {"enum": list(SCENARIOS)},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object", "properties": {"alpha": _POS, "n": {"type": "integer", "minimum": 1}},
                   "additionalProperties": False},
        "grid": {"type": "object", "properties": {"n": {"type": "integer", "minimum": 1}, "R": _POS, "h": _POS},
                 "additionalProperties": False},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
                   "additionalProperties": False},
        "thresholds": {"type": "object", "additionalProperties": {"type": ["number", "string", "boolean"]}},
        "weight": {"$ref": "#/definitions/weight"},
        "sigma": {"$ref": "#/definitions/weight"},
        "symbol": {"$ref": "#/definitions/symbol"},
        "symbol2": {"$ref": "#/definitions/symbol"},
        "disk_weight": _DISK_WEIGHT,
        "p": {"type": "number", "minimum": 1},
        "r": _POS,
        "scan": {"type": "object", "properties": {"radius": _POS, "step": {"oneOf": [_POS, {"type": "null"}]}},
                 "additionalProperties": False},
        "cube_h": _POS,
        "refine": {"type": "boolean"},
        "R_values": _NUM_LIST,
        "basis_degree": {"type": "integer", "minimum": 1, "maximum": matrix.MAX_DEGREE},
        "radii": _NUM_LIST,
        "angles": {"type": "integer", "minimum": 1},
        "orientation": {"enum": list(localization.ORIENTATIONS)},
        "verdict": {"type": "object"},
        "apex_moduli": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "minItems": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "samples": {"type": "integer", "minimum": 1},
        "gammas": _NUM_LIST,
    }
    branches = []
    for sc in _REGISTRY.values():
        allowed = sorted(set(_COMMON) | set(sc.required) | set(sc.optional))
        branches.append({
            "if": {"properties": {"scenario": {"const": sc.name}}, "required": ["scenario"]},
            "then": {"required": list(sc.required), "propertyNames": {"enum": allowed}},
        })
    return {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "definitions": {"weight": _WEIGHT, "symbol": _SYMBOL},
        "type": "object",
        "required": ["scenario"],
        "properties": props,
        "additionalProperties": False,
        "allOf": branches,
    }


class ConfigError(ValueError):
    pass


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming the JSON pointer of the first violation."""
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if "propertyNames" in e.absolute_schema_path:
            path.append(e.instance)  # point at the offending key itself
        elif e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            path.append(extra[0])
        raise ConfigError(f"config error at {_pointer(path)}: {e.message}")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("weight", "sigma", "symbol",
                                                                                  "symbol2", "disk_weight"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(cfg: dict, grid_R=None, grid_h=None) -> dict:
    """Validate, fill scenario defaults and apply command-line grid overrides."""
    validate_config(cfg)
    sc = _REGISTRY[cfg["scenario"]]
    base = {"seed": DEFAULT_SEED, "params": {"alpha": 1.0, "n": 1}, "thresholds": {}}
    out = _merge(_merge(base, sc.defaults), cfg)
    if grid_R is not None or grid_h is not None:
        g = out.setdefault("grid", {})
        if grid_R is not None:
            g["R"] = float(grid_R)
        if grid_h is not None:
            g["h"] = float(grid_h)
    return out


# ---------------------------------------------------------------------------
# helpers for scenario runners


@dataclass
class Table:
    name: str
    columns: tuple
    rows: list


@dataclass
class Outcome:
    tables: list
    metrics: dict
    passed: bool


def _params(cfg) -> fock.FockParams:
    return fock.FockParams(float(cfg["params"]["alpha"]), int(cfg["params"]["n"]))


def _grid(cfg):
    g = cfg["grid"]
    return build_grid(GridSpec(int(g.get("n", cfg["params"]["n"])), float(g["R"]), float(g["h"])))


def _scan(cfg) -> weights.ScanSpec:
    return weights.ScanSpec.from_json(cfg.get("scan"))


def _th(cfg, key):
    return cfg["thresholds"][key]


def _finite(x) -> bool:
    return x is not None and math.isfinite(float(x))


# ---------------------------------------------------------------------------
# scenario runners


def run_weight_check(cfg) -> Outcome:
    n = int(cfg["params"]["n"])
    w = weights.weight_from_json(cfg["weight"])
    sigma = weights.weight_from_json(cfg["sigma"]) if "sigma" in cfg else w
    scan = _scan(cfg)
    rep = weights.joint_characteristic(w, sigma, cfg["p"], cfg["r"], scan=scan, n=n, h=cfg["cube_h"],
                                       refine=cfg["refine"])
    dbl = weights.doubling_constant(w, cfg["r"], scan, n, cfg["cube_h"], refine=False)
    gap_ok = (not cfg["refine"]) or not (rep.refinement_gap > _th(cfg, "max_refinement_gap"))
    passed = rep.finite and gap_ok and rep.value <= _th(cfg, "max_value")
    metrics = {"characteristic": rep.value, "refinement_gap": rep.refinement_gap, "finite": rep.finite,
               "doubling_constant": dbl.value, "note": rep.note}
    return Outcome([Table("characteristic", rep.CSV_COLUMNS, [rep.csv_row()])], metrics, passed)


def _bracket_outcome(cfg, problem) -> Outcome:
    grid = _grid(cfg)
    b = matrix.norm_bracket(_params(cfg), problem, cfg["r"], grid=grid, scan=_scan(cfg), h=cfg["cube_h"],
                            seed=cfg["seed"])
    sound = b.is_sound(_th(cfg, "soundness_tol"))
    width = b.upper / b.lower if b.lower > 0 else math.inf
    narrow = (not math.isfinite(b.upper)) or width <= _th(cfg, "max_width")
    metrics = {"lower": b.lower, "point_estimate": b.point_estimate, "upper": b.upper, "width": width,
               "sound": sound, "upper_reason": b.upper_reason, "characteristic": b.witnesses.get("characteristic")}
    return Outcome([Table("bracket", b.CSV_COLUMNS, [b.csv_row()])], metrics, sound and narrow)


def run_projection_norm(cfg) -> Outcome:
    sigma = weights.weight_from_json(cfg["sigma"])
    w = weights.weight_from_json(cfg["weight"])
    return _bracket_outcome(cfg, matrix.ProjectionProblem(sigma, w, cfg["p"]))


def run_toeplitz_norm(cfg) -> Outcome:
    phi = fock.symbol_from_json(cfg["symbol"])
    w = weights.weight_from_json(cfg["weight"])
    out = _bracket_outcome(cfg, matrix.ToeplitzProblem(phi, w, cfg["p"]))
    if "basis_degree" in cfg:
        A = matrix.toeplitz_matrix(_params(cfg), phi, int(cfg["basis_degree"]))
        out.metrics["matrix_norm"] = matrix.norm2_power_iteration(A, seed=cfg["seed"])
        d = np.diag(A.entries)
        out.tables.append(Table("diagonal", ("m", "re", "im"),
                                [[m, float(v.real), float(v.imag)] for m, v in enumerate(d)]))
    return out


def _circle_points(radii, count) -> np.ndarray:
    return localization.circle_samples(tuple(radii), count)


def run_berezin_scan(cfg) -> Outcome:
    params = _params(cfg)
    phi = fock.symbol_from_json(cfg["symbol"])
    grid = _grid(cfg)
    radii = [float(r) for r in cfg["radii"]]
    count = int(cfg["angles"])
    rows, sups = [], []
    for r in radii:
        pts = _circle_points([r], count)
        vals = np.atleast_1d(fock.berezin_symbol(params, phi, pts, grid))
        sups.append(float(np.max(np.abs(vals))))
        for z, v in zip(pts, vals):
            rows.append([r, z.real, z.imag, complex(v).real, complex(v).imag])
    vanish, keep = _th(cfg, "vanish_threshold"), _th(cfg, "noncompact_threshold")
    if sups[-1] < vanish:
        verdict = "compact-consistent"
    elif min(sups) >= keep:
        verdict = "non-compact-consistent"
    else:
        verdict = "inconclusive"
    expected = cfg["thresholds"].get("expected_verdict")
    passed = verdict == expected if expected else verdict != "inconclusive"
    metrics = {"verdict": verdict, "berezin_sup": dict(zip(map(str, radii), sups))}
    return Outcome([Table("berezin", ("radius", "z_re", "z_im", "value_re", "value_im"), rows)], metrics, passed)


def run_compactness(cfg) -> Outcome:
    params = _params(cfg)
    phi = fock.symbol_from_json(cfg["symbol"])
    w = weights.weight_from_json(cfg["weight"])
    A = matrix.toeplitz_matrix(params, phi, int(cfg["basis_degree"]))
    vcfg = localization.VerdictConfig.from_json({**cfg.get("verdict", {}), "seed": cfg["seed"]})
    v = localization.compactness_verdict(A, cfg["p"], w, vcfg)
    expected = cfg["thresholds"].get("expected_verdict")
    passed = v.verdict == expected if expected else v.verdict != "inconclusive"
    return Outcome([Table("decay", v.CSV_COLUMNS, v.rows())], v.to_json(), passed)


def run_counterexample(cfg) -> Outcome:
    params = _params(cfg)
    sigma = weights.weight_from_json(cfg["sigma"])
    w = weights.weight_from_json(cfg["weight"])
    h = float(cfg["grid"]["h"])
    rows, norms = [], []
    for R in cfg["R_values"]:
        grid = build_grid(GridSpec(params.n, float(R), h))
        op = matrix.grid_operator_build(params, sigma, w, 2, grid)
        val = matrix.norm2_power_iteration(op, seed=cfg["seed"])
        norms.append(val)
        rows.append([float(R), h, grid.size, val])
    char = weights.joint_characteristic(w, sigma, 2, cfg["r"], scan=_scan(cfg), n=params.n, h=cfg["cube_h"])
    mode = _th(cfg, "mode")
    metrics = {"norms": norms, "characteristic": char.value, "refinement_gap": char.refinement_gap}
    char_ok = char.finite and char.refinement_gap < _th(cfg, "max_refinement_gap")
    if mode == "growth":
        growth = norms[-1] / norms[0]
        increasing = all(b > a for a, b in zip(norms[:-1], norms[1:]))
        metrics.update(growth=growth, strictly_increasing=increasing)
        passed = char_ok and increasing and growth >= _th(cfg, "min_growth")
    else:
        change = abs(norms[-1] - norms[-2]) / norms[-2] if len(norms) > 1 else 0.0
        metrics["last_change"] = change
        passed = char_ok and change < _th(cfg, "max_change")
        if "target" in cfg["thresholds"]:
            passed = passed and all(abs(v - _th(cfg, "target")) <= _th(cfg, "target_tol") * _th(cfg, "target")
                                    for v in norms)
    return Outcome([Table("norms", ("R", "h", "nodes", "norm"), rows)], metrics, passed)


def run_wl_profile(cfg) -> Outcome:
    params = _params(cfg)
    N = int(cfg["basis_degree"])
    w = weights.weight_from_json(cfg["weight"])
    T = matrix.toeplitz_matrix(params, fock.symbol_from_json(cfg["symbol"]), N)
    grid = _grid(cfg)
    radii = [float(r) for r in cfg["radii"]]
    prof = localization.wl_profile(T, cfg["p"], w, radii, orientation=cfg["orientation"], grid=grid)
    columns = ["r", "profile"]
    cols = [prof.values]
    profiles = {"T": prof}
    if "symbol2" in cfg:
        S = matrix.toeplitz_matrix(params, fock.symbol_from_json(cfg["symbol2"]), N)
        prof2 = localization.wl_profile(T @ S, cfg["p"], w, radii, orientation=cfg["orientation"], grid=grid)
        columns.append("product_profile")
        cols.append(prof2.values)
        profiles["TS"] = prof2
    rows = [[r, *(float(c[i]) for c in cols)] for i, r in enumerate(radii)]
    r_mid, r_far = float(_th(cfg, "ratio_from")), float(_th(cfg, "ratio_to"))
    metrics, passed = {}, True
    for name, pr in profiles.items():
        ratio = pr.value_at(r_far) / pr.value_at(r_mid)
        dec = pr.is_nonincreasing()
        metrics[name] = {"nonincreasing": dec, "ratio": ratio}
        passed &= dec
        if name == "T":
            passed &= ratio <= _th(cfg, "max_ratio")
    return Outcome([Table("profile", tuple(columns), rows)], metrics, bool(passed))


def run_bergman_bp(cfg) -> Outcome:
    sigma = bergman.disk_weight_from_json(cfg["disk_weight"])
    mods = [float(m) for m in cfg["apex_moduli"]]
    delta, p = float(cfg["delta"]), cfg["p"]
    bp = bergman.bp_characteristic(sigma, p, mods, int(cfg["angles"]), delta)
    cp = bergman.cp_characteristic(sigma, p, mods, int(cfg["angles"]), delta)
    rows = [[m, bergman.tent_characteristic(sigma, p, m, delta), bergman.ball_characteristic(sigma, p, m, delta)]
            for m in mods]
    gap = _th(cfg, "max_refinement_gap")
    passed = bp.finite and cp.finite and bp.refinement_gap <= gap and cp.refinement_gap <= gap
    metrics = {"bp": bp.value, "cp": cp.value, "bp_gap": bp.refinement_gap, "cp_gap": cp.refinement_gap,
               "cp_over_bp": cp.value / bp.value}
    return Outcome([Table("apexes", ("apex_modulus", "tent_value", "ball_value"), rows)], metrics, passed)


def run_bergman_containment(cfg) -> Outcome:
    pivot = bergman.chain_pivot()
    rows, ok = [], pivot["exact"]
    limit = _th(cfg, "max_constant")
    for m in cfg["apex_moduli"]:
        rep = bergman.containment_check(float(m), int(cfg["samples"]), cfg["seed"])
        rows.append([float(m), rep.samples, rep.violations, rep.max_constant])
        ok &= rep.violations == 0 and rep.max_constant < limit
    metrics = {"chain_pivot": pivot, "max_constant": max(r[3] for r in rows),
               "violations": sum(r[2] for r in rows)}
    return Outcome([Table("containment", ("apex_modulus", "samples", "violations", "max_constant"), rows)],
                   metrics, bool(ok))


def run_bergman_hatlemma(cfg) -> Outcome:
    res = bergman.hat_lemma_check(cfg["gammas"], cfg["p"], [float(m) for m in cfg["apex_moduli"]],
                                  float(cfg["delta"]))
    cols = ("gamma", "bp_sigma", "bp_hat", "ratio", "gap_sigma", "gap_hat")
    rows = [[r[c] for c in cols] for r in res]
    gap = _th(cfg, "max_refinement_gap")
    passed = all(r["finite"] and r["ratio"] <= _th(cfg, "max_ratio") and r["gap_sigma"] <= gap
                 and r["gap_hat"] <= gap for r in res)
    return Outcome([Table("hat_lemma", cols, rows)], {"max_ratio": max(r["ratio"] for r in res)}, passed)


_GAUSS_PAIR = {"sigma": {"family": "gaussian", "beta": -1.0}, "weight": {"family": "gaussian", "beta": -4.0}}

_REGISTRY = {sc.name: sc for sc in (
    Scenario("weight-check", "restricted A_p / joint A_{p,r} characteristic of weights on cubes of side r",
             ("weight",), ("sigma", "p", "r", "scan", "cube_h", "refine"),
             {"p": 2.0, "r": 1.0, "cube_h": 0.05, "refine": True, "scan": {"radius": 6.0, "step": None},
              "thresholds": {"max_refinement_gap": 0.05, "max_value": math.inf}},
             run_weight_check),
    Scenario("projection-norm", "two-weight boundedness of the Fock projection: test-function lower and "
             "Schur upper bounds around a grid norm", ("sigma", "weight"), ("p", "r", "scan", "cube_h"),
             {"p": 2.0, "r": 1.0, "cube_h": 0.05, "scan": {"radius": 6.0, "step": None},
              "grid": {"R": 6.0, "h": 0.4}, "thresholds": {"soundness_tol": 0.1, "max_width": 1e3}},
             run_projection_norm),
    Scenario("toeplitz-norm", "boundedness of T_phi on weighted L^p via the symbol-adapted characteristic",
             ("symbol", "weight"), ("p", "r", "scan", "cube_h", "basis_degree"),
             {"p": 2.0, "r": 1.0, "cube_h": 0.05, "scan": {"radius": 6.0, "step": None},
              "grid": {"R": 6.0, "h": 0.4}, "thresholds": {"soundness_tol": 0.1, "max_width": 1e3}},
             run_toeplitz_norm),
    Scenario("berezin-scan", "Berezin transform of T_phi on circles; vanishing at infinity signals compactness",
             ("symbol",), ("radii", "angles"),
             {"radii": [0.0, 1.0, 2.0, 3.0], "angles": 16, "grid": {"R": 8.0, "h": 0.1},
              "thresholds": {"vanish_threshold": 1e-2, "noncompact_threshold": 0.1}},
             run_berezin_scan),
    Scenario("compactness", "compactness in the Toeplitz algebra iff the Berezin transform vanishes; "
             "Berezin decay plus Riesz-Kolmogorov tails", ("symbol",), ("weight", "p", "basis_degree", "verdict"),
             {"weight": {"family": "constant", "value": 1.0}, "p": 2.0, "basis_degree": 60, "verdict": {}},
             run_compactness),
    Scenario("counterexample", "Gaussian two-weight pair: finite joint characteristic, unbounded projection",
             (), ("sigma", "weight", "r", "scan", "cube_h", "R_values"),
             {**_GAUSS_PAIR, "r": 1.0, "cube_h": 0.05, "scan": {"radius": 6.0, "step": None},
              "R_values": [2.0, 3.0, 4.0], "grid": {"h": 0.25},
              "thresholds": {"mode": "growth", "min_growth": 2.0, "max_refinement_gap": 0.05, "max_change": 0.05}},
             run_counterexample),
    Scenario("wl-profile", "weak localization of Toeplitz operators and of their products",
             ("symbol",), ("symbol2", "weight", "p", "basis_degree", "radii", "orientation"),
             {"weight": {"family": "constant", "value": 1.0}, "p": 2.0, "basis_degree": 60,
              "radii": [0.0, 1.0, 2.0, 3.0, 4.0], "orientation": "u", "grid": {"R": 8.0, "h": 0.1},
              "thresholds": {"ratio_from": 2.0, "ratio_to": 4.0, "max_ratio": 0.2}},
             run_wl_profile),
    Scenario("bergman-bp", "Bekolle-Bonami B_p and metric-ball C_p characteristics on the disk",
             ("disk_weight",), ("p", "apex_moduli", "angles", "delta"),
             {"p": 2.0, "apex_moduli": list(bergman.APEX_MODULI), "angles": bergman.APEX_ANGLES,
              "delta": bergman.DEFAULT_DELTA, "thresholds": {"max_refinement_gap": 0.05}},
             run_bergman_bp),
    Scenario("bergman-containment", "union of metric balls over a tent lies in an enlarged tent",
             (), ("apex_moduli", "samples"),
             {"apex_moduli": [0.955, 0.97, 0.99], "samples": 10_000, "thresholds": {"max_constant": 20.0}},
             run_bergman_containment),
    Scenario("bergman-hatlemma", "metric-ball averaging sigma -> sigma_hat preserves B_p",
             (), ("gammas", "p", "apex_moduli", "delta"),
             {"gammas": [-0.3, 0.0, 0.5, 1.0], "p": 2.0, "apex_moduli": list(bergman.APEX_MODULI),
              "delta": bergman.DEFAULT_DELTA, "thresholds": {"max_ratio": 50.0, "max_refinement_gap": 0.05}},
             run_bergman_hatlemma),
)}


def list_scenarios() -> list[tuple[str, str, str]]:
    """``(name, required keys, result it exercises)`` in a fixed order."""
    return [(name, ", ".join(_REGISTRY[name].required) or "-", _REGISTRY[name].summary) for name in SCENARIOS]


# ---------------------------------------------------------------------------
# output


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(t.columns)
    for row in t.rows:
        wr.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else format_value(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, localization.WLProfile):
        return {"radii": _jsonable(x.radii), "values": _jsonable(x.values)}
    if x is None or isinstance(x, str):
        return x
    return str(x)


def run(cfg: dict, out_dir: str, threads: int | None = None, grid_R=None, grid_h=None) -> dict:
    """Run one scenario and write ``<prefix>.csv`` tables and ``summary.json`` into ``out_dir``."""
    resolved = resolve_config(cfg, grid_R, grid_h)
    sc = _REGISTRY[resolved["scenario"]]
    start = time.perf_counter()
    with threadpool_limits(limits=threads):
        outcome = sc.runner(resolved)
    elapsed = time.perf_counter() - start
    os.makedirs(out_dir, exist_ok=True)
    prefix = resolved.get("output", {}).get("prefix", sc.name)
    files = []
    for t in outcome.tables:
        path = os.path.join(out_dir, f"{prefix}.csv" if t is outcome.tables[0] else f"{prefix}_{t.name}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(table_csv(t))
        files.append(path)
    summary = {"scenario": sc.name, "pass": bool(outcome.passed), "metrics": _jsonable(outcome.metrics),
               "config": _jsonable(resolved), "wall_clock_s": elapsed, "tables": files}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="focklab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one scenario from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (default: config output.dir or ./out)")
    p_run.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads (default: all cores)")
    p_run.add_argument("--grid-R", dest="grid_R", type=float, default=None)
    p_run.add_argument("--grid-h", dest="grid_h", type=float, default=None)
    sub.add_parser("list", help="list scenarios")
    args = parser.parse_args(argv)

    if args.command == "list":
        rows = list_scenarios()
        width = max(len(r[0]) for r in rows)
        for name, req, summary in rows:
            print(f"{name:<{width}}  required: {req:<20}  {summary}")
        return 0

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config error at /: top level must be an object")
        out_dir = args.out or cfg.get("output", {}).get("dir") or "out"
        threads = args.threads or os.cpu_count()
        summary = run(cfg, out_dir, threads, args.grid_R, args.grid_h)
    except Exception as exc:  # every failure maps to exit status 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if summary["pass"] else "FAIL"
    print(f"{summary['scenario']}: {status} ({summary['wall_clock_s']:.1f} s) -> {out_dir}")
    return 0 if summary["pass"] else 2


if __name__ == "__main__":
    sys.exit(main())
