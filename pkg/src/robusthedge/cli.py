"""
Command-line front end: ``validate``, ``price``, ``hedge``, ``verify``, ``report``.

All inputs come from one YAML config; all outputs go to ``--out`` (default
``run.out``).  Every artifact carries the config hash on its first line and
downstream commands refuse artifacts whose hash differs.

Exit codes: 0 ok, 2 validation or config failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import decomposition as dec
from . import robust_pricer as rp
from . import verification as ver
from .levy_model import ConditionError, check_jump_support, check_saturation, has_dominating_diffusion
from .path_engine import PositivityError, simulate_ensemble, price_path

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class Refused(Exception):
    """Input problem that maps to exit status 2."""


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class _Run:
    def __init__(self, args):
        self.cfg = cfgmod.load(args.config)
        if args.seed is not None:
            self.cfg["run"]["seed"] = int(args.seed)
        if args.threads is not None:
            self.cfg["run"]["threads"] = int(args.threads)
        self.strict_limsup = bool(getattr(args, "strict_limsup", False))
        self.hash = cfgmod.config_hash(self.cfg)
        self.out = Path(args.out or self.cfg["run"]["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self._priced = None

    # -- artifact io ------------------------------------------------------- #
    def write_csv(self, name, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            fh.write(f"# config_hash={self.hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def write_json(self, name, obj):
        obj = dict(obj, config_hash=self.hash)
        (self.out / name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsondefault) + "\n")

    def write_text(self, name, lines):
        (self.out / name).write_text(f"config_hash: {self.hash}\n" + "\n".join(lines) + "\n")

    def artifact_hash(self, name):
        p = self.out / name
        if not p.exists():
            return None
        first = p.read_text().splitlines()[:1]
        if name.endswith(".json"):
            return json.loads(p.read_text()).get("config_hash", "")
        line = first[0] if first else ""
        for prefix in ("# config_hash=", "config_hash: "):
            if line.startswith(prefix):
                return line[len(prefix):].strip()
        return ""

    def guard(self, name):
        """Refuse to proceed when ``name`` exists with another config hash."""
        h = self.artifact_hash(name)
        if h is not None and h != self.hash:
            raise Refused(f"{name} was produced by config {h or '<unknown>'}, not {self.hash}")
        return h is not None

    # -- shared pipeline --------------------------------------------------- #
    def model(self):
        theta = cfgmod.build_model(self.cfg)
        if self.cfg["model"]["price_map"] == "exponential":
            bad = check_jump_support(theta)
            if bad is not None:
                raise ConditionError(bad, "jump support", "atom at or below -1 under the exponential price map")
        return theta

    def priced(self):
        if self._priced is None:
            theta = self.model()
            lat = cfgmod.build_lattice(self.cfg, theta)
            f = cfgmod.build_payoff(self.cfg)
            value, vf = rp.price(f, theta, lat)
            self._priced = theta, lat, f, value, vf
        return self._priced


def _jsondefault(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# --------------------------------------------------------------------------- #
# validate
# --------------------------------------------------------------------------- #

def cmd_validate(run: _Run) -> int:
    failures = []
    lines = []
    try:
        theta = cfgmod.build_model(run.cfg, strict=False)
    except ConditionError as e:
        failures.append({"condition": e.condition, "index": e.index, "detail": str(e)})
        theta = None
    diff = []
    sat = None
    support = None
    if theta is not None:
        for i, (c, F) in enumerate(theta.prime_elements):
            ok = has_dominating_diffusion(c, F)
            diff.append(ok)
            if not ok:
                failures.append({"condition": "dominating diffusion", "index": i,
                                 "detail": "jumps present but c is not strictly positive definite"})
        sat = check_saturation(theta)
        if not sat.passed:
            i, j = sat.violation
            failures.append({"condition": "saturation", "index": i,
                             "detail": f"reweighting by test density {j} leaves the set"})
        if run.cfg["model"]["price_map"] == "exponential":
            support = check_jump_support(theta)
            if support is not None:
                failures.append({"condition": "jump support", "index": support,
                                 "detail": "atom at or below -1 makes the exponential price nonpositive"})
    lines.append(f"pairs: {len(theta) if theta is not None else 'n/a'}")
    lines.append(f"truncation radius: {run.cfg['model']['truncation_radius']}")
    if theta is not None:
        lines.append(f"integrable jumps: pass ({len(theta)} pairs)")
        lines.append(f"dominating diffusion: {'pass' if all(diff) else 'FAIL'} ({sum(diff)}/{len(diff)})")
        lines.append(f"saturation: {'pass' if sat.passed else 'FAIL'} ({sat.checked} reweightings checked; {sat.note})")
        if run.cfg["model"]["price_map"] == "exponential":
            lines.append(f"jump support above -1: {'pass' if support is None else 'FAIL'}")
    for f in failures:
        lines.append(f"failure: {f['condition']} at pair {f['index']}: {f['detail']}")
    passed = not failures
    lines.append(f"result: {'PASS' if passed else 'FAIL'}")
    run.write_text("validate.txt", lines)
    run.write_json("validate.json", {
        "passed": passed,
        "failures": failures,
        "n_pairs": len(theta) if theta is not None else 0,
        "dominating_diffusion": diff,
        "saturation": None if sat is None else {"passed": sat.passed, "checked": sat.checked, "note": sat.note},
    })
    if not passed:
        names = sorted({f["condition"] for f in failures})
        print(f"validation failed: {', '.join(names)}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


# --------------------------------------------------------------------------- #
# price
# --------------------------------------------------------------------------- #

def cmd_price(run: _Run) -> int:
    theta, lat, f, value, vf = run.priced()
    run.write_csv("price.csv", ["key", "value"], [
        ("price", value),
        ("payoff", f.name),
        ("price_map", lat.price_map),
        ("truncation_radius", run.cfg["model"]["truncation_radius"]),
        ("T", lat.grid.T),
        ("N", lat.grid.N),
        ("substeps", lat.substeps),
        ("nodes", lat.n),
        ("dx", lat.dx),
        ("n_triplets", len(theta)),
    ])
    t = lat.grid.times
    y, s = lat.nodes, lat.prices
    run.write_csv("surface.csv", ["t", "y", "s", "v"],
                  ((t[k], y[j], s[j], vf.v[k, j]) for k in range(lat.grid.N + 1) for j in range(lat.n)))
    c = theta.diffusions()[:, 0, 0]
    run.write_csv("argmax.csv", ["t", "y", "s", "triplet", "c"],
                  ((t[k], y[j], s[j], int(vf.argmax[k, j]), c[vf.argmax[k, j]])
                   for k in range(lat.grid.N) for j in range(lat.n)))
    masses = theta.mass_matrix()
    atoms = theta.atom_universe[:, 0] if theta.atom_universe.size else np.zeros(0)
    run.write_csv("triplets.csv", ["triplet", "b", "c"] + [f"mass@{a!r}" for a in atoms],
                  ([i, theta[i].b[0], c[i]] + list(masses[i]) for i in range(len(theta))))
    print(f"price {value!r}")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# hedge
# --------------------------------------------------------------------------- #

def cmd_hedge(run: _Run) -> int:
    run.guard("price.csv")
    theta, lat, f, value, vf = run.priced()
    num = run.cfg["numerics"]
    M = int(run.cfg["run"]["hedge_paths"])
    seed = int(run.cfg["run"]["seed"])
    ens = simulate_ensemble(theta, rp.argmax_policy(vf, lat), lat.grid, seed, M)
    s = price_path(ens, lat.price_map).s
    H_ana = dec.analytic_strategy(vf, lat, theta)(ens.x, s)
    y = rp.value_along_path(vf, s, lat).y
    H_emp = np.stack([
        dec.empirical_strategy(s[i], y[i], lat.grid.dt, window=int(num["window"]), lag=int(num["lag"]),
                               strict=run.strict_limsup, alpha_mult=float(num["threshold_mult"]),
                               beta=float(num["threshold_power"])).H
        for i in range(M)
    ])
    t = lat.grid.times
    rows = []
    for i in range(M):
        for prov, H in (("analytic", H_ana), ("empirical", H_emp)):
            for k in range(lat.grid.N):
                rows.append((i, t[k], H[i, k, 0], prov))
    run.write_csv("hedge.csv", ["path", "t", "H", "provenance"], rows)
    lag = int(num["lag"])
    diff = np.abs(H_emp - H_ana)[:, lag:, 0].mean(axis=1)
    summary = {
        "paths": M,
        "seed": seed,
        "lag": lag,
        "strict_limsup": run.strict_limsup,
        "median_mean_abs_difference": float(np.median(diff)),
        "per_path_mean_abs_difference": diff,
    }
    run.write_json("hedge_summary.json", summary)
    print(f"hedge: median |H_emp - H_ana| = {summary['median_mean_abs_difference']:.6g}")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# verify
# --------------------------------------------------------------------------- #

def _histogram(results, bins=40):
    top = max((r.shortfalls.max() for r in results.values()), default=0.0)
    edges = np.linspace(0.0, top if top > 0 else 1.0, bins + 1)
    for name, r in results.items():
        counts, _ = np.histogram(r.shortfalls, edges)
        for a, b, n in zip(edges[:-1], edges[1:], counts):
            yield name, a, b, int(n)


def cmd_verify(run: _Run) -> int:
    run.guard("price.csv")
    run.guard("hedge_summary.json")
    theta, lat, f, value, vf = run.priced()
    num, r = run.cfg["numerics"], run.cfg["run"]
    seed, threads = int(r["seed"]), int(r["threads"])
    eps = ver.hedge_tolerance(ver.sigma_max(theta), lat.grid.dt, c1=float(num["c1"]))
    cap = num["shortfall_cap"]
    strategy = dec.analytic_strategy(vf, lat, theta)
    menu = ver.policy_menu(theta, vf, lat, constants="extreme")
    sh = ver.superhedge_test(value, strategy, f, theta, menu, int(r["paths"]), lat.grid, seed, lat.price_map,
                             eps, float(num["fail_quota"]), None if cap is None else float(cap), threads=threads)
    mono = {}
    n_mono = min(int(r["paths"]), 2000)
    for name, pol in menu.items():
        he = ver.hedged_ensemble(theta, pol, lat.grid, seed, n_mono, vf, lat, strategy)
        mono[name] = ver.monotonicity_test(he.y, he.H, he.s, eps)
    gap = ver.duality_gap(f, theta, lat, int(r["mc_paths"]), seed, vf=vf, threads=threads)

    refinement = []
    for N in num["refinement"]:
        lat_n = cfgmod.build_lattice(run.cfg, theta, N=int(N), nodes=cfgmod.refined_nodes(run.cfg, int(N)))
        g = ver.duality_gap(f, theta, lat_n, int(r["paths"]), seed, threads=threads)
        refinement.append((int(N), lat_n.dx, g.upper, g.lower, g.gap, g.std_errors[g.best_policy], g.best_policy))

    run.write_csv("shortfall.csv", ["policy", "bin_lo", "bin_hi", "count"], _histogram(sh.results))
    run.write_csv("gap.csv", ["N", "dx", "upper", "lower", "gap", "lower_se", "best_policy"], refinement)

    lines = [f"note: {ver.MENU_NOTE}", f"seed: {seed}", f"price: {value!r}",
             f"eps_hedge = eps_mono = {eps:.6g}; fail quota {sh.fail_quota}; shortfall cap {sh.shortfall_cap:.6g}",
             "", f"superhedging ({int(r['paths'])} paths per policy):"]
    for name, p in sh.results.items():
        lines.append(f"  {name}: {'pass' if p.passed else 'FAIL'}  fail fraction {p.fail_fraction:.4f}"
                     f"  max shortfall {p.max_shortfall:.6g}")
    lines += ["", f"monotonicity of Y - H.S ({n_mono} paths per policy):"]
    for name, m in mono.items():
        lines.append(f"  {name}: {'pass' if m.passed else 'FAIL'}  p99 positive increment {m.p99_positive:.6g}"
                     f"  mean terminal K {m.terminal_K_mean:.6g} (se {m.terminal_K_se:.2g})")
    lines += ["", f"duality ({int(r['mc_paths'])} paths): upper {gap.upper:.8g}, lower {gap.lower:.8g}"
              f" ({gap.best_policy}), relative gap {gap.relative_gap:.4%},"
              f" weak duality {'ok' if gap.weak_duality_ok else 'VIOLATED'}"]
    run.write_text("verify.txt", lines)
    run.write_json("verify.json", {
        "note": ver.MENU_NOTE,
        "seed": seed,
        "price": value,
        "eps_hedge": eps,
        "eps_mono": eps,
        "fail_quota": sh.fail_quota,
        "shortfall_cap": sh.shortfall_cap,
        "superhedge": {n: {"paths": p.n_paths, "fail_fraction": p.fail_fraction, "max_shortfall": p.max_shortfall,
                           "mean_shortfall": p.mean_shortfall, "passed": p.passed}
                       for n, p in sh.results.items()},
        "monotonicity": {n: {"paths": n_mono, "p99_positive": m.p99_positive, "exceed_fraction": m.exceed_fraction,
                             "terminal_K_mean": m.terminal_K_mean, "terminal_K_se": m.terminal_K_se,
                             "passed": m.passed} for n, m in mono.items()},
        "duality": {"upper": gap.upper, "lower": gap.lower, "gap": gap.gap, "relative_gap": gap.relative_gap,
                    "best_policy": gap.best_policy, "weak_duality_ok": gap.weak_duality_ok,
                    "paths": gap.n_paths, "means": gap.means, "std_errors": gap.std_errors},
    })
    print("\n".join(lines[5:]))
    return EXIT_OK


# --------------------------------------------------------------------------- #
# report
# --------------------------------------------------------------------------- #

ARTIFACTS = ["validate.txt", "validate.json", "price.csv", "surface.csv", "argmax.csv", "triplets.csv",
             "hedge.csv", "hedge_summary.json", "verify.txt", "verify.json", "shortfall.csv", "gap.csv"]


def _read_kv(path):
    rows = [r for r in csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#"))]
    return {k: v for k, v in rows[1:]}


def cmd_report(run: _Run) -> int:
    present = [a for a in ARTIFACTS if (run.out / a).exists()]
    if not present:
        raise Refused(f"no artifacts in {run.out}; run validate/price/hedge/verify first")
    for a in present:
        run.guard(a)
    lines = ["# Run summary", "", f"config hash: `{run.hash}`", "",
             f"artifacts: {', '.join(present)}", ""]
    if "validate.json" in present:
        v = json.loads((run.out / "validate.json").read_text())
        lines += ["## Validation", "", f"result: {'pass' if v['passed'] else 'FAIL'}"]
        lines += [f"- {f['condition']} at pair {f['index']}: {f['detail']}" for f in v["failures"]]
        lines.append("")
    if "price.csv" in present:
        kv = _read_kv(run.out / "price.csv")
        lines += ["## Price", "", "| key | value |", "|---|---|"]
        lines += [f"| {k} | {v} |" for k, v in kv.items()]
        lines.append("")
    if "hedge_summary.json" in present:
        h = json.loads((run.out / "hedge_summary.json").read_text())
        lines += ["## Hedge", "", f"paths: {h['paths']}, lag {h['lag']}, strict limsup: {h['strict_limsup']}",
                  f"median per-path mean |H_emp - H_ana|: {h['median_mean_abs_difference']:.6g}", ""]
    if "verify.json" in present:
        v = json.loads((run.out / "verify.json").read_text())
        lines += ["## Verification", "", f"_{v['note']}_", "",
                  f"eps_hedge = eps_mono = {v['eps_hedge']:.6g}", "",
                  "| policy | superhedge | fail fraction | max shortfall | monotone | p99 increment |",
                  "|---|---|---|---|---|---|"]
        for name, p in v["superhedge"].items():
            m = v["monotonicity"][name]
            lines.append(f"| {name} | {'pass' if p['passed'] else 'FAIL'} | {p['fail_fraction']:.4f} "
                         f"| {p['max_shortfall']:.6g} | {'pass' if m['passed'] else 'FAIL'} | {m['p99_positive']:.6g} |")
        d = v["duality"]
        lines += ["", f"duality: upper {d['upper']:.8g}, lower {d['lower']:.8g} ({d['best_policy']}), "
                      f"relative gap {d['relative_gap']:.4%}, weak duality {'ok' if d['weak_duality_ok'] else 'VIOLATED'}",
                  ""]
    if "gap.csv" in present:
        rows = list(csv.reader(l for l in (run.out / "gap.csv").read_text().splitlines() if not l.startswith("#")))
        lines += ["### Gap under refinement", "", "| " + " | ".join(rows[0]) + " |",
                  "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        lines.append("")
    (run.out / "summary.md").write_text("\n".join(lines))
    print(f"wrote {run.out / 'summary.md'}")
    return EXIT_OK


# --------------------------------------------------------------------------- #

COMMANDS = {"validate": cmd_validate, "price": cmd_price, "hedge": cmd_hedge,
            "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robusthedge", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (default: run.out)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--strict-limsup", action="store_true",
                   help="zero non-PSD covariation densities instead of projecting them")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        return COMMANDS[args.command](run)
    except (rp.CFLError, rp.NumericalError, PositivityError, FloatingPointError) as e:
        print(f"{args.command}: numerical failure in {type(e).__module__.rsplit('.', 1)[-1]}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, Refused) as e:
        # config, condition and other input errors
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
