"""
Sublinear expectation of terminal payoffs by backward dynamic programming.

The value ``v(t, y)`` solves, on a uniform one-dimensional lattice, the
explicit monotone recursion

    v_k = max_θ (v_{k+1} + dt L^θ v_{k+1})

with ``L^θ v = μ v' + ½ c v'' + Σ mass [v(y + shift) - v(y)]``.  Two price
maps are supported:

``"linear"``
    the lattice coordinate is ``X`` itself and ``S = 1 + X``; ``μ`` is the
    compound-Poisson drift ``b - ∫h dF`` and ``shift = z``.
``"exponential"``
    ``S`` is the stochastic exponential of ``X`` and the lattice coordinate is
    ``log S``; ``μ = b - ∫h dF - c/2`` and ``shift = log(1 + z)``.

Off-lattice jump targets are read by linear interpolation inside the span and
by the affine-in-``S`` extension of the payoff outside it.  Boundary nodes are
held at their terminal values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .levy_model import LevyTriplet, UncertaintySet
from .path_engine import TimeGrid

CFL_LIMIT = 0.9


class CFLError(ArithmeticError):
    def __init__(self, triplet, ratio, limit):
        self.triplet = triplet
        self.ratio = ratio
        super().__init__(f"CFL violated for triplet {triplet}: {ratio:.4g} > {limit}")


class NumericalError(ArithmeticError):
    pass


# --------------------------------------------------------------------------- #
# Payoffs
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Payoff:
    """Terminal payoff ``g(S_T)`` with linear growth ``|g(s)| <= growth (1 + |s|)``."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    growth: float = 1.0

    def __call__(self, s) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(s, dtype=float)), dtype=float)

    def check_growth(self, s) -> None:
        s = np.asarray(s, dtype=float)
        if np.any(np.abs(self(s)) > self.growth * (1.0 + np.abs(s)) * (1 + 1e-12)):
            raise ValueError(f"payoff {self.name} exceeds its growth bound {self.growth}")


def call(strike: float = 1.0) -> Payoff:
    return Payoff(f"call({strike:g})", lambda s: np.maximum(s - strike, 0.0), max(1.0, abs(strike)))


def put(strike: float = 1.0) -> Payoff:
    return Payoff(f"put({strike:g})", lambda s: np.maximum(strike - s, 0.0), max(1.0, abs(strike)))


def digital(strike: float = 1.0, amount: float = 1.0) -> Payoff:
    return Payoff(f"digital({strike:g})", lambda s: np.where(s > strike, amount, 0.0), abs(amount))


def linear(slope: float = 1.0, intercept: float = 0.0) -> Payoff:
    return Payoff(f"linear({slope:g},{intercept:g})", lambda s: intercept + slope * s,
                  max(abs(slope), abs(intercept), 1e-300))


def constant(value: float) -> Payoff:
    return Payoff(f"constant({value:g})", lambda s: np.full(np.shape(s), float(value)), max(abs(value), 1e-300))


def tabulated(points, values) -> Payoff:
    """Piecewise-linear payoff through ``(points, values)``, extended affinely."""
    p = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.size < 2 or np.any(np.diff(p) <= 0):
        raise ValueError("tabulated payoff needs at least two increasing points")
    lo_slope = (v[1] - v[0]) / (p[1] - p[0])
    hi_slope = (v[-1] - v[-2]) / (p[-1] - p[-2])

    def fn(s):
        out = np.interp(s, p, v)
        out = np.where(s < p[0], v[0] + lo_slope * (s - p[0]), out)
        return np.where(s > p[-1], v[-1] + hi_slope * (s - p[-1]), out)

    growth = max(np.max(np.abs(v) / (1 + np.abs(p))), abs(lo_slope), abs(hi_slope),
                 abs(v[0] - lo_slope * p[0]), abs(v[-1] - hi_slope * p[-1]))
    return Payoff("tabulated", fn, float(growth))


# --------------------------------------------------------------------------- #
# Lattice
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class Lattice:
    nodes: np.ndarray
    grid: TimeGrid
    substeps: int = 1
    price_map: str = "exponential"
    cfl_limit: float = CFL_LIMIT

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("lattice needs at least three nodes")
        dx = np.diff(nodes)
        if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0):
            raise ValueError("lattice nodes must be uniform and increasing")
        if self.price_map not in ("linear", "exponential"):
            raise ValueError(f"unknown price map {self.price_map!r}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def for_theta(
        cls,
        theta: UncertaintySet,
        grid: TimeGrid,
        n_nodes: int = 801,
        span_mult: float = 6.0,
        price_map: str = "exponential",
        cfl_limit: float = CFL_LIMIT,
    ) -> "Lattice":
        """Centered lattice wide enough for the model; sub-steps chosen for CFL."""
        if theta.dim != 1:
            raise ValueError("the lattice pricer handles one-dimensional models only")
        sig = np.sqrt(theta.diffusions()[:, 0, 0].max())
        reach, count = 0.0, 0.0
        for t in theta:
            if not t.F.is_zero:
                reach = max(reach, float(np.max(np.abs(_shift(t.F.locations[:, 0], price_map)))))
                count = max(count, t.F.total_mass * grid.T)
        half = span_mult * (sig * np.sqrt(grid.T) + reach * count)
        if half <= 0:
            half = 1.0
        if n_nodes % 2 == 0:
            n_nodes += 1
        nodes = np.linspace(-half, half, n_nodes)
        lat = cls(nodes, grid, 1, price_map, cfl_limit)
        ratio = max(_cfl_ratio(*lat.coefficients(t), lat.dx, grid.dt) for t in theta)
        substeps = max(1, int(np.ceil(ratio / cfl_limit * (1 + 1e-12))))
        return cls(nodes, grid, substeps, price_map, cfl_limit)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def dx(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def dt(self) -> float:
        """Step of one generator application."""
        return self.grid.dt / self.substeps

    @property
    def origin(self) -> int:
        """Index of the node for ``X_0 = 0``."""
        i = int(np.argmin(np.abs(self.nodes)))
        if abs(self.nodes[i]) > 1e-12 * max(1.0, self.dx):
            raise ValueError("the lattice has no node at the initial state")
        return i

    def to_price(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.exp(y) if self.price_map == "exponential" else 1.0 + y

    def from_price(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.price_map == "exponential":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(s)
        return s - 1.0

    @property
    def prices(self) -> np.ndarray:
        return self.to_price(self.nodes)

    def coefficients(self, t: LevyTriplet):
        """``(μ, c, shifts, masses)`` of the generator in lattice coordinates."""
        c = float(t.c[0, 0])
        mu = float(t.effective_drift[0])
        if self.price_map == "exponential":
            mu -= 0.5 * c
        if t.F.is_zero:
            return mu, c, np.zeros(0), np.zeros(0)
        return mu, c, _shift(t.F.locations[:, 0], self.price_map), t.F.masses.copy()


def _shift(z, price_map):
    z = np.asarray(z, dtype=float)
    if price_map == "exponential":
        if np.any(z <= -1):
            raise ValueError("exponential model needs jumps in (-1, inf)")
        return np.log1p(z)
    return z


def _central_ok(mu, c, dx):
    return c >= abs(mu) * dx


def _cfl_ratio(mu, c, shifts, masses, dx, dt):
    r = c / dx**2 + float(np.sum(masses))
    if not _central_ok(mu, c, dx):
        r += abs(mu) / dx
    return dt * r


def affine_extension(values: np.ndarray, lattice: Lattice) -> Callable[[np.ndarray], np.ndarray]:
    """Affine-in-``S`` continuation of node values beyond each end of the lattice."""
    s = lattice.prices
    lo = (values[0], (values[1] - values[0]) / (s[1] - s[0]), s[0])
    hi = (values[-1], (values[-1] - values[-2]) / (s[-1] - s[-2]), s[-1])

    def ext(target_s):
        below = target_s < s[0]
        return np.where(below, lo[0] + lo[1] * (target_s - lo[2]), hi[0] + hi[1] * (target_s - hi[2]))

    return ext


def _lookup(v: np.ndarray, y: np.ndarray, lattice: Lattice, outside) -> np.ndarray:
    nodes = lattice.nodes
    inside = (y >= nodes[0]) & (y <= nodes[-1])
    out = np.interp(y, nodes, v)
    if not np.all(inside):
        ext = outside if outside is not None else affine_extension(v, lattice)
        out = np.where(inside, out, ext(lattice.to_price(y)))
    return out


@dataclass(frozen=True)
class _Operator:
    """Generator coefficients of a whole triplet grid, ready for vectorized use."""

    mu: np.ndarray  # (K,)
    c: np.ndarray  # (K,)
    central: np.ndarray  # (K,) bool
    shifts: np.ndarray  # (A,)
    masses: np.ndarray  # (K, A)


def _operator(triplets, lattice: Lattice) -> _Operator:
    coeffs = [lattice.coefficients(t) for t in triplets]
    shifts = np.unique(np.concatenate([cf[2] for cf in coeffs])) if coeffs else np.zeros(0)
    masses = np.zeros((len(coeffs), shifts.size))
    for i, (mu, c, sh, m) in enumerate(coeffs):
        for z, w in zip(sh, m):
            masses[i, np.searchsorted(shifts, z)] += w
    mu = np.array([cf[0] for cf in coeffs])
    c = np.array([cf[1] for cf in coeffs])
    dx = lattice.dx
    for t, (m_, c_, sh, ms) in zip(triplets, coeffs):
        ratio = _cfl_ratio(m_, c_, sh, ms, dx, lattice.dt)
        if ratio > lattice.cfl_limit * (1 + 1e-12):
            raise CFLError(t, ratio, lattice.cfl_limit)
    return _Operator(mu, c, _central_ok(mu, c, dx), shifts, masses)


def _apply(op: _Operator, v: np.ndarray, lattice: Lattice, outside) -> np.ndarray:
    """Candidates ``v + dt L^θ v`` for every triplet, shape ``(K, n)``."""
    dx, dt = lattice.dx, lattice.dt
    vm, v0, vp = v[:-2], v[1:-1], v[2:]
    d2 = (vp - 2.0 * v0 + vm) / dx**2
    dc = (vp - vm) / (2.0 * dx)
    df = (vp - v0) / dx
    db = (v0 - vm) / dx
    mu = op.mu[:, None]
    grad = np.where(op.central[:, None], dc[None, :], np.where(mu > 0, df[None, :], db[None, :]))
    gen = mu * grad + 0.5 * op.c[:, None] * d2[None, :]
    if op.shifts.size:
        shifted = np.stack([_lookup(v, lattice.nodes + z, lattice, outside) for z in op.shifts])
        gen = gen + op.masses @ (shifted[:, 1:-1] - v0[None, :])
    out = np.empty((op.mu.size, v.size))
    out[:, 1:-1] = v0[None, :] + dt * gen
    out[:, 0] = v[0]
    out[:, -1] = v[-1]
    return out


def generator_step(v_next, triplet: LevyTriplet, lattice: Lattice, outside=None) -> np.ndarray:
    """One explicit step ``v + dt L^θ v`` (``dt`` = ``lattice.dt``) for one triplet.

    Raises :class:`CFLError` when ``dt (c/Δx² + total jump mass) > cfl_limit``.
    """
    v = np.asarray(v_next, dtype=float)
    return _apply(_operator([triplet], lattice), v, lattice, outside)[0]


# --------------------------------------------------------------------------- #
# Dynamic programming
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class ValueFunction:
    """``v[k]`` on the nodes at macro time ``t_k``; ``argmax[k]`` is the triplet
    chosen at ``t_k`` for ``(t_k, t_{k+1}]`` (lowest index on ties)."""

    v: np.ndarray
    argmax: np.ndarray
    payoff: Payoff

    def __post_init__(self):
        self.v.setflags(write=False)
        self.argmax.setflags(write=False)


def _backward(v, op, lattice, outside, k_from, k_to, store=None, arg=None):
    for k in range(k_from - 1, k_to - 1, -1):
        for _ in range(lattice.substeps):
            cand = _apply(op, v, lattice, outside)
            idx = np.argmax(cand, axis=0)
            v = cand[idx, np.arange(v.size)]
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite value at time index {k}")
        if store is not None:
            store[k] = v
            arg[k] = idx
    return v


def price(f: Payoff, theta: UncertaintySet, lattice: Lattice) -> tuple[float, ValueFunction]:
    """Robust price ``sup_P E^P[f(S_T)]`` at ``S_0 = 1`` and the full value function."""
    s = lattice.prices
    f.check_growth(s)
    terminal = f(s)
    outside = affine_extension(terminal, lattice)
    op = _operator(list(theta), lattice)
    N = lattice.grid.N
    v = np.empty((N + 1, lattice.n))
    arg = np.empty((N, lattice.n), dtype=np.intp)
    v[N] = terminal
    _backward(terminal, op, lattice, outside, N, 0, v, arg)
    vf = ValueFunction(v, arg, f)
    return float(v[0, lattice.origin]), vf


def dpp_check(vf: ValueFunction, s_idx: int, t_idx: int, theta: UncertaintySet, lattice: Lattice) -> float:
    """Max node-wise defect between ``vf.v[s_idx]`` and the recursion restarted
    from ``vf.v[t_idx]`` as terminal data."""
    if s_idx > t_idx:
        raise ValueError("need s_idx <= t_idx")
    if s_idx == t_idx:
        return 0.0
    outside = affine_extension(vf.payoff(lattice.prices), lattice)
    op = _operator(list(theta), lattice)
    w = _backward(np.array(vf.v[t_idx]), op, lattice, outside, t_idx, s_idx)
    return float(np.max(np.abs(w - vf.v[s_idx])))


def monotone_step(v, theta: UncertaintySet, lattice: Lattice, outside=None) -> tuple[np.ndarray, np.ndarray]:
    """One sup step over the triplet grid: ``(max_θ v + dt L^θ v, argmax)``."""
    cand = _apply(_operator(list(theta), lattice), np.asarray(v, dtype=float), lattice, outside)
    idx = np.argmax(cand, axis=0)
    return cand[idx, np.arange(cand.shape[1])], idx


@dataclass(frozen=True)
class ValuePath:
    y: np.ndarray
    out_of_span: np.ndarray

    @property
    def out_of_span_fraction(self) -> float:
        return float(np.mean(self.out_of_span))


def interpolate(values: np.ndarray, y: np.ndarray, lattice: Lattice):
    """Linear interpolation on the nodes, affine-in-S outside; returns ``(vals, outside_mask)``."""
    nodes = lattice.nodes
    out = (y < nodes[0]) | (y > nodes[-1]) | ~np.isfinite(y)
    vals = np.interp(y, nodes, values)
    if np.any(out):
        ext = affine_extension(values, lattice)
        with np.errstate(invalid="ignore", over="ignore"):
            vals = np.where(out, ext(lattice.to_price(y)), vals)
    return vals, out


def value_along_path(vf: ValueFunction, path, lattice: Lattice) -> ValuePath:
    """``Y[k] = v[k](state_k)`` along price paths ``s`` of shape ``(..., N+1)`` or ``(..., N+1, 1)``.

    Off-span states are evaluated by affine extension and flagged.
    """
    s = np.asarray(getattr(path, "s", path), dtype=float)
    if s.ndim >= 2 and s.shape[-1] == 1 and s.shape[-2] == lattice.grid.N + 1:
        s = s[..., 0]
    y = lattice.from_price(s)
    Y = np.empty_like(y)
    out = np.zeros(y.shape, dtype=bool)
    for k in range(lattice.grid.N + 1):
        Y[..., k], out[..., k] = interpolate(vf.v[k], y[..., k], lattice)
    return ValuePath(Y, out)


def argmax_policy(vf: ValueFunction, lattice: Lattice):
    """Markov policy following the stored argmax at the nearest interior node."""

    def policy(k, x, s):
        state = s[:, 0] if lattice.price_map == "exponential" else x[:, 0]
        y = lattice.from_price(state) if lattice.price_map == "exponential" else state
        y = np.where(np.isfinite(y), y, lattice.nodes[0])
        i = np.rint((y - lattice.nodes[0]) / lattice.dx).astype(np.intp)
        i = np.clip(i, 1, lattice.n - 2)
        return vf.argmax[k, i]

    policy.__name__ = "argmax"
    return policy
