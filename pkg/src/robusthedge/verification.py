"""
Empirical checks of robust superhedging on simulated ensembles.

Every check runs over a finite menu of Markov policies (constant controls and
the pricer's argmax feedback).  A finite menu can only approximate the
quasi-sure quantifier "for all measures in the set", so results are reported
per policy and never merged into one verdict.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .levy_model import UncertaintySet
from .path_engine import TimeGrid, constant_policy, draw_noise, price_path, simulate_ensemble, stochastic_integral
from .robust_pricer import Lattice, Payoff, ValueFunction, argmax_policy, price, value_along_path

MENU_NOTE = (
    "quasi-sure statements are approximated by a finite policy menu; "
    "results are per policy"
)


def hedge_tolerance(sigma_max: float, dt: float, s_scale: float = 1.0, c1: float = 5.0) -> float:
    """``c1 · σ_max · √dt · S-scale``: size of the discrete hedging error."""
    return c1 * sigma_max * np.sqrt(dt) * s_scale


def sigma_max(theta: UncertaintySet) -> float:
    return float(np.sqrt(max(np.linalg.eigvalsh(t.c).max() for t in theta)))


def extreme_indices(theta: UncertaintySet) -> list:
    """Triplets whose diffusion and every atom mass sit at the grid's min or max."""
    feats = np.column_stack([theta.diffusions().reshape(len(theta), -1), theta.mass_matrix()])
    lo, hi = feats.min(axis=0), feats.max(axis=0)
    ok = np.all(np.isclose(feats, lo) | np.isclose(feats, hi), axis=1)
    return [int(i) for i in np.flatnonzero(ok)]


def policy_menu(theta: UncertaintySet, vf: Optional[ValueFunction] = None, lattice: Optional[Lattice] = None,
                constants: str = "extreme") -> Dict[str, Callable]:
    """Named policies: constant controls (``"extreme"`` or ``"all"``) plus ``argmax``."""
    idx = extreme_indices(theta) if constants == "extreme" else list(range(len(theta)))
    menu = {f"constant[{i}]": constant_policy(i) for i in idx}
    if vf is not None and lattice is not None:
        menu["argmax"] = argmax_policy(vf, lattice)
    return menu


def _chunks(n, size):
    for a in range(0, n, size):
        yield a, min(n, a + size)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def constant_strategy(h) -> Callable:
    """Strategy source holding ``h`` units of each asset at every step."""

    def source(x, s):
        M, n1, d = s.shape
        return np.broadcast_to(np.asarray(h, dtype=float), (M, n1 - 1, d)).copy()

    source.provenance = "constant"
    return source


# --------------------------------------------------------------------------- #
# Superhedging
# --------------------------------------------------------------------------- #

@dataclass
class PolicyShortfall:
    n_paths: int
    fail_fraction: float
    max_shortfall: float
    mean_shortfall: float
    passed: bool
    shortfalls: np.ndarray = field(repr=False)


@dataclass
class SuperhedgeReport:
    x0: float
    eps_hedge: float
    fail_quota: float
    shortfall_cap: float
    seed: int
    results: Dict[str, PolicyShortfall]
    note: str = MENU_NOTE

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())


def superhedge_test(
    x0: float,
    strategy: Callable,
    f: Payoff,
    theta: UncertaintySet,
    policies: Dict[str, Callable],
    n_paths: int,
    grid: TimeGrid,
    seed: int,
    price_map: str = "exponential",
    eps_hedge: Optional[float] = None,
    fail_quota: float = 0.01,
    shortfall_cap: Optional[float] = None,
    chunk: int = 5000,
    threads: int = 1,
) -> SuperhedgeReport:
    """Shortfall ``(f(S_T) - x0 - (H•S)_T)^+`` per policy.

    A policy passes when the fraction of shortfalls above ``eps_hedge`` is at
    most ``fail_quota`` and the largest shortfall is at most ``shortfall_cap``
    (default ``10 · eps_hedge``).
    """
    eps = hedge_tolerance(sigma_max(theta), grid.dt) if eps_hedge is None else eps_hedge
    cap = 10 * eps if shortfall_cap is None else shortfall_cap

    def run(name):
        sf = []
        for a, b in _chunks(n_paths, chunk):
            ens = simulate_ensemble(theta, policies[name], grid, seed, b - a, start=a)
            s = price_path(ens, price_map).s
            gains = stochastic_integral(strategy(ens.x, s), s)[:, -1]
            sf.append(np.maximum(f(s[:, -1, 0]) - x0 - gains, 0.0))
        sf = np.concatenate(sf)
        frac = float(np.mean(sf > eps))
        mx = float(sf.max())
        return name, PolicyShortfall(n_paths, frac, mx, float(sf.mean()), frac <= fail_quota and mx <= cap, sf)

    results = dict(_map(run, list(policies), threads))
    return SuperhedgeReport(x0, eps, fail_quota, cap, seed, results)


# --------------------------------------------------------------------------- #
# Optional decomposition along paths
# --------------------------------------------------------------------------- #

@dataclass
class MonotonicityReport:
    eps_mono: float
    p99_positive: float
    exceed_fraction: float
    mean_increment: np.ndarray  # per step, of Y - H•S
    se_increment: np.ndarray
    terminal_K_mean: float
    terminal_K_se: float
    passed: bool


def monotonicity_test(y, H, s, eps_mono: float) -> MonotonicityReport:
    """Check that ``Y - H•S`` is nonincreasing up to ``eps_mono``.

    ``y``: ``(M, N+1)``; ``H``: ``(M, N, d)``; ``s``: ``(M, N+1, d)``.  Passes
    when the 99th percentile of the positive per-step increments is at most
    ``eps_mono``.  ``K = Y_0 - Y + H•S`` is the nondecreasing part.
    """
    y = np.asarray(y, dtype=float)
    gains = stochastic_integral(H, s)
    D = y - gains
    inc = np.diff(D, axis=-1)
    pos = inc[inc > 0]
    p99 = float(np.percentile(pos, 99)) if pos.size else 0.0
    M = y.shape[0]
    K = y[:, :1] - y + gains
    return MonotonicityReport(
        eps_mono,
        p99,
        float(np.mean(inc > eps_mono)),
        inc.mean(axis=0),
        inc.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(inc.shape[1]),
        float(K[:, -1].mean()),
        float(K[:, -1].std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0,
        p99 <= eps_mono,
    )


@dataclass
class HedgedEnsemble:
    s: np.ndarray
    y: np.ndarray
    H: np.ndarray
    out_of_span: float


def hedged_ensemble(theta, policy, grid, seed, n_paths, vf, lattice, strategy, start: int = 0) -> HedgedEnsemble:
    """Simulate under ``policy`` and attach ``Y`` from the value function and ``H``."""
    ens = simulate_ensemble(theta, policy, grid, seed, n_paths, start=start)
    s = price_path(ens, lattice.price_map).s
    vp = value_along_path(vf, s, lattice)
    return HedgedEnsemble(s, vp.y, strategy(ens.x, s), vp.out_of_span_fraction)


# --------------------------------------------------------------------------- #
# Duality gap
# --------------------------------------------------------------------------- #

@dataclass
class DualityReport:
    upper: float
    lower: float
    gap: float
    best_policy: str
    means: Dict[str, float]
    std_errors: Dict[str, float]
    weak_duality_ok: bool
    n_paths: int
    seed: int
    note: str = MENU_NOTE

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.upper) if self.upper else float("nan")


def monte_carlo_means(f: Payoff, theta, policies, grid, n_paths, seed, price_map="exponential",
                      chunk: int = 10000, threads: int = 1):
    """Mean and standard error of ``f(S_T)`` per policy; common random numbers across policies."""
    d = theta.dim
    n_atoms = theta.atom_universe.shape[0]
    names = list(policies)
    acc = {n: [0.0, 0.0] for n in names}
    for a, b in _chunks(n_paths, chunk):
        noise = draw_noise(seed, np.arange(a, b), grid.N, d, n_atoms)

        def run(name):
            ens = simulate_ensemble(theta, policies[name], grid, seed, noise=noise)
            pay = f(price_path(ens, price_map).s[:, -1, 0])
            return name, pay.sum(), (pay * pay).sum()

        for name, s1, s2 in _map(run, names, threads):
            acc[name][0] += s1
            acc[name][1] += s2
    means, ses = {}, {}
    for n in names:
        m = acc[n][0] / n_paths
        var = max(acc[n][1] / n_paths - m * m, 0.0) * n_paths / max(n_paths - 1, 1)
        means[n], ses[n] = m, float(np.sqrt(var / n_paths))
    return means, ses


def duality_gap(
    f: Payoff,
    theta: UncertaintySet,
    lattice: Lattice,
    n_paths: int,
    seed: int,
    policies: Optional[Dict[str, Callable]] = None,
    vf: Optional[ValueFunction] = None,
    scheme_tol: float = 0.0,
    chunk: int = 10000,
    threads: int = 1,
) -> DualityReport:
    """Upper bound from the lattice, lower bound from the best policy's Monte-Carlo mean.

    Default policies are every constant control plus the argmax feedback.
    Weak duality holds when no policy mean exceeds the upper bound by more
    than three standard errors plus ``scheme_tol``.
    """
    if vf is None:
        upper, vf = price(f, theta, lattice)
    else:
        upper = float(vf.v[0, lattice.origin])
    if policies is None:
        policies = policy_menu(theta, vf, lattice, constants="all")
    means, ses = monte_carlo_means(f, theta, policies, lattice.grid, n_paths, seed,
                                   lattice.price_map, chunk, threads)
    best = max(means, key=lambda n: means[n])
    ok = all(means[n] - upper <= 3 * ses[n] + scheme_tol for n in means)
    return DualityReport(upper, means[best], upper - means[best], best, means, ses, ok, n_paths, seed)
