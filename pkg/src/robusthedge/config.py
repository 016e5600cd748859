"""
Run configuration: a YAML tree with four sections.

Every key has a default (see ``DEFAULTS``); unknown keys are rejected.  The
model is given either as explicit ``pairs`` or as a parametric family::

    model:
      truncation_radius: 1.0
      price_map: exponential        # or linear (S = 1 + X)
      sigma: {min: 0.1, max: 0.3, steps: 5}
      jumps:
        - {location: -0.5, min: 0.0, max: 1.0, steps: 5}

    model:
      dimension: 2
      pairs:
        - c: [[0.04, 0.01], [0.01, 0.09]]
          atoms: [{location: [0.2, -0.1], mass: 0.5}]

A jump intensity range may be unbounded (``max: .inf``); ``grid_max`` then
bounds the grid used for numerics while membership keeps the full range.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import yaml

from . import robust_pricer as rp
from .levy_model import LevyMeasure, TruncationFunction, build_theta, parametric_theta
from .path_engine import TimeGrid


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "model": {
        "dimension": 1,
        "truncation_radius": 1.0,
        "price_map": "exponential",
        "strict": True,
        "pairs": None,
        "sigma": None,
        "jumps": [],
    },
    "numerics": {
        "T": 1.0,
        "N": 256,
        "nodes": 801,
        "span_mult": 6.0,
        "cfl_limit": 0.9,
        "lag": 8,
        "window": 32,
        "threshold_mult": 3.0,
        "threshold_power": 0.4,
        "c1": 5.0,
        "fail_quota": 0.01,
        "shortfall_cap": None,
        "refinement": [64, 128, 256],
    },
    "payoff": {
        "kind": "call",
        "strike": 1.0,
        "amount": 1.0,
        "slope": 1.0,
        "intercept": 0.0,
        "value": 0.0,
        "points": None,
        "values": None,
    },
    "run": {
        "paths": 10000,
        "mc_paths": 100000,
        "hedge_paths": 20,
        "seed": 1,
        "out": "out",
        "threads": 1,
    },
}

_SIGMA_KEYS = {"min", "max", "steps"}
_JUMP_KEYS = {"location", "min", "max", "steps", "grid_max"}
_PAIR_KEYS = {"c", "atoms"}
_ATOM_KEYS = {"location", "mass"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown keys."""
    raw = raw or {}
    _check_keys(raw, DEFAULTS, "config")
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if values is None:
            continue
        _check_keys(values, DEFAULTS[section], section)
        cfg[section].update(values)
    m = cfg["model"]
    if m["sigma"] is not None:
        _check_keys(m["sigma"], _SIGMA_KEYS, "model.sigma")
    for j, jump in enumerate(m["jumps"] or []):
        _check_keys(jump, _JUMP_KEYS, f"model.jumps[{j}]")
    for j, pair in enumerate(m["pairs"] or []):
        _check_keys(pair, _PAIR_KEYS, f"model.pairs[{j}]")
        for a, atom in enumerate(pair.get("atoms") or []):
            _check_keys(atom, _ATOM_KEYS, f"model.pairs[{j}].atoms[{a}]")
    if (m["pairs"] is None) == (m["sigma"] is None):
        raise ConfigError("model: give exactly one of 'pairs' or 'sigma'")
    if m["pairs"] is not None and m["jumps"]:
        raise ConfigError("model: 'jumps' belongs to the parametric form")
    if m["price_map"] not in ("exponential", "linear"):
        raise ConfigError(f"model.price_map: unknown value {m['price_map']!r}")
    n = cfg["numerics"]
    positive = [("numerics.T", n["T"]), ("numerics.N", n["N"]), ("numerics.span_mult", n["span_mult"]),
                ("numerics.cfl_limit", n["cfl_limit"]), ("numerics.lag", n["lag"]), ("numerics.c1", n["c1"]),
                ("model.truncation_radius", m["truncation_radius"])]
    positive += [(f"run.{k}", cfg["run"][k]) for k in ("paths", "mc_paths", "hedge_paths", "threads")]
    for name, value in positive:
        if not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"{name} must be positive, got {value!r}")
    if n["nodes"] < 3 or n["window"] < 2:
        raise ConfigError("numerics.nodes must be at least 3 and numerics.window at least 2")
    if n["cfl_limit"] > 1:
        raise ConfigError("numerics.cfl_limit above 1 breaks monotonicity of the scheme")
    return cfg


def load(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config: {e}") from e
    return resolve(raw)


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


def config_hash(cfg: dict) -> str:
    """Hash of everything that affects numbers (output dir and threads excluded)."""
    c = copy.deepcopy(cfg)
    c["run"].pop("out", None)
    c["run"].pop("threads", None)
    blob = json.dumps(_jsonable(c), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_model(cfg: dict, strict=None):
    m = cfg["model"]
    h = TruncationFunction(float(m["truncation_radius"]))
    strict = m["strict"] if strict is None else strict
    if m["sigma"] is not None:
        if int(m["dimension"]) != 1:
            raise ConfigError("parametric families are one-dimensional; use 'pairs'")
        s = m["sigma"]
        atoms = []
        for j in m["jumps"] or []:
            hi = float(j["max"])
            entry = (float(j["location"]), float(j["min"]), hi, int(j["steps"]))
            if j.get("grid_max") is not None:
                entry = entry + (float(j["grid_max"]),)
            elif not math.isfinite(hi):
                raise ConfigError("unbounded intensity range needs 'grid_max'")
            atoms.append(entry)
        return parametric_theta((float(s["min"]), float(s["max"]), int(s["steps"])), atoms, h, strict)
    d = int(m["dimension"])
    prime = []
    for pair in m["pairs"]:
        c = np.atleast_2d(np.asarray(pair["c"], dtype=float))
        if c.shape != (d, d):
            raise ConfigError(f"pair diffusion has shape {c.shape}, expected ({d}, {d})")
        atoms = pair.get("atoms") or []
        if atoms:
            loc = np.array([np.atleast_1d(np.asarray(a["location"], dtype=float)) for a in atoms])
            F = LevyMeasure(loc.reshape(len(atoms), d), [float(a["mass"]) for a in atoms])
        else:
            F = LevyMeasure.zero(d)
        prime.append((c, F))
    return build_theta(prime, h, strict=strict)


def build_grid(cfg: dict, N=None) -> TimeGrid:
    return TimeGrid(float(cfg["numerics"]["T"]), int(N or cfg["numerics"]["N"]))


def refined_nodes(cfg: dict, N: int) -> int:
    """Node count for ``N`` steps keeping ``Δx ∝ 1/N`` relative to the base run (odd)."""
    n = cfg["numerics"]
    m = max(int(round((int(n["nodes"]) - 1) * N / int(n["N"]))), 2)
    return m + 1 if m % 2 == 0 else m + 2


def build_lattice(cfg: dict, theta, N=None, nodes=None) -> rp.Lattice:
    n = cfg["numerics"]
    nodes = int(nodes or n["nodes"])
    return rp.Lattice.for_theta(theta, build_grid(cfg, N), nodes, float(n["span_mult"]),
                                cfg["model"]["price_map"], float(n["cfl_limit"]))


def build_payoff(cfg: dict) -> rp.Payoff:
    p = cfg["payoff"]
    kind = p["kind"]
    if kind == "call":
        return rp.call(float(p["strike"]))
    if kind == "put":
        return rp.put(float(p["strike"]))
    if kind == "digital":
        return rp.digital(float(p["strike"]), float(p["amount"]))
    if kind == "linear":
        return rp.linear(float(p["slope"]), float(p["intercept"]))
    if kind == "constant":
        return rp.constant(float(p["value"]))
    if kind == "tabulated":
        if p["points"] is None or p["values"] is None:
            raise ConfigError("tabulated payoff needs 'points' and 'values'")
        return rp.tabulated(p["points"], p["values"])
    raise ConfigError(f"payoff.kind: unknown value {kind!r}")


def dump(cfg: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=False))
