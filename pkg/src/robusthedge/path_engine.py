"""
Path simulation for controlled Lévy triplets.

Paths of ``X`` are generated with an Euler scheme on a uniform grid.  Within a
step the increment is ``μ dt + √(c dt) Z + Σ_atoms N_atom · z_atom`` where the
control picks the triplet, ``μ`` is its compound-Poisson drift and
``N_atom ~ Poisson(mass · dt)``.  Each path owns a Philox stream keyed by
``(seed, path index)``; the raw noise does not depend on the control, so all
policies are driven by common random numbers and ensembles are reproducible
in any chunking or order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .levy_model import UncertaintySet


class PositivityError(ArithmeticError):
    """The stochastic exponential hit a non-positive factor."""


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0 or int(self.N) < 1:
            raise ValueError("need T > 0 and N >= 1")
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        return t


Policy = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def constant_policy(index: int) -> Policy:
    def policy(k, x, s):
        return np.full(x.shape[0], index, dtype=np.intp)

    policy.__name__ = f"constant[{index}]"
    return policy


def markov_policy(fn: Callable[[int, np.ndarray], np.ndarray], use_price: bool = False) -> Policy:
    """Wrap ``fn(k, state)`` where ``state`` is ``x[k]`` (or ``s[k]``)."""

    def policy(k, x, s):
        return np.asarray(fn(k, s if use_price else x), dtype=np.intp)

    return policy


@dataclass(frozen=True)
class Noise:
    """Control-independent randomness for a block of paths.

    ``normal`` has shape ``(M, N, d)``; ``uniform`` has shape ``(M, N, n_atoms)``
    and is turned into Poisson counts by inverse transform.
    """

    normal: np.ndarray
    uniform: np.ndarray
    path_ids: np.ndarray


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(path_index)]))


def draw_noise(seed: int, path_ids, N: int, d: int, n_atoms: int) -> Noise:
    path_ids = np.asarray(path_ids, dtype=np.int64)
    M = path_ids.size
    normal = np.empty((M, N, d))
    uniform = np.empty((M, N, n_atoms))
    for row, pid in enumerate(path_ids):
        g = path_stream(seed, pid)
        normal[row] = g.standard_normal((N, d))
        uniform[row] = g.random((N, n_atoms))
    return Noise(normal, uniform, path_ids)


def coarsen_noise(noise: Noise, factor: int) -> Noise:
    """Gaussian noise of the same Brownian paths on a grid ``factor`` times coarser.

    Only diffusion noise can be aggregated exactly; jump uniforms cannot.
    """
    if noise.uniform.shape[-1]:
        raise ValueError("jump noise cannot be coarsened")
    M, N, d = noise.normal.shape
    if N % factor:
        raise ValueError("grid size is not a multiple of the coarsening factor")
    z = noise.normal.reshape(M, N // factor, factor, d).sum(axis=2) / np.sqrt(factor)
    return Noise(z, np.empty((M, N // factor, 0)), noise.path_ids)


def poisson_inverse(u: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Poisson counts by inverse transform; ``mean`` broadcasts against ``u``."""
    mean = np.broadcast_to(mean, u.shape)
    p = np.exp(-mean)
    cdf = p.copy()
    count = np.zeros(u.shape, dtype=np.int64)
    todo = u > cdf
    k = 0
    while np.any(todo):
        k += 1
        p = np.where(todo, p * mean / k, p)
        cdf = np.where(todo, cdf + p, cdf)
        count += todo
        todo &= u > cdf
        if k > 1000:  # guards against u == 1 after round-off
            break
    return count


def _sqrt_psd(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    return (v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True)
class Ensemble:
    """Block of simulated paths.

    ``x`` has shape ``(M, N+1, d)``; ``controls`` ``(M, N)``; ``jumps`` holds
    the summed jump sizes per step ``(M, N, d)``; ``diffusion`` the Gaussian
    increments ``(M, N, d)``; ``counts`` the Poisson counts per atom of
    ``theta.atom_universe``; ``jump_factor`` is ``Π (1 + z)^count`` per step
    and component, the multiplicative effect of the step's jumps on ``S``.
    """

    x: np.ndarray
    controls: np.ndarray
    jumps: np.ndarray
    diffusion: np.ndarray
    counts: np.ndarray
    jump_factor: np.ndarray
    path_ids: np.ndarray
    grid: TimeGrid

    def __len__(self):
        return self.x.shape[0]

    def path(self, i: int) -> "SamplePath":
        return SamplePath(
            self.x[i], self.controls[i], self.jumps[i], self.diffusion[i], self.counts[i],
            self.jump_factor[i], self.grid,
        )


@dataclass(frozen=True)
class SamplePath:
    x: np.ndarray
    controls: np.ndarray
    jump_marks: np.ndarray
    diffusion: np.ndarray
    counts: np.ndarray
    jump_factor: np.ndarray
    grid: TimeGrid


@dataclass(frozen=True)
class PricePath:
    s: np.ndarray


def _exp_factor(dx: np.ndarray, jumps=None, jump_factor=None) -> np.ndarray:
    # jumps act after the continuous part of the step, one factor per jump
    if jumps is None:
        return 1.0 + dx
    return (1.0 + dx - jumps) * jump_factor


def simulate_ensemble(
    theta: UncertaintySet,
    policy: Policy,
    grid: TimeGrid,
    seed: int,
    n_paths: int = 1,
    start: int = 0,
    noise: Optional[Noise] = None,
) -> Ensemble:
    """Simulate paths ``start .. start + n_paths - 1`` under a Markov policy.

    The policy receives ``(k, x[:, k], s[:, k])`` where ``s`` is the discrete
    stochastic exponential of the path so far, and returns triplet indices.
    """
    d = theta.dim
    drifts = theta.effective_drifts()  # (K, d)
    roots = _sqrt_psd(theta.diffusions())  # (K, d, d)
    masses = theta.mass_matrix()  # (K, A)
    atoms = theta.atom_universe  # (A, d)
    N, dt = grid.N, grid.dt
    if noise is None:
        noise = draw_noise(seed, np.arange(start, start + n_paths), N, d, atoms.shape[0])
    M = noise.normal.shape[0]
    x = np.zeros((M, N + 1, d))
    s = np.ones((M, d))
    controls = np.empty((M, N), dtype=np.intp)
    jumps = np.zeros((M, N, d))
    diffusion = np.empty((M, N, d))
    counts = np.zeros((M, N, atoms.shape[0]), dtype=np.int64)
    jump_factor = np.ones((M, N, d))
    base = 1.0 + atoms
    nonpositive = np.any(base <= 0, axis=1)
    sqdt = np.sqrt(dt)
    K = len(theta)
    for k in range(N):
        idx = np.asarray(policy(k, x[:, k], s), dtype=np.intp)
        if idx.shape != (M,):
            idx = np.broadcast_to(idx, (M,)).copy()
        if np.any((idx < 0) | (idx >= K)):
            raise IndexError("policy returned an index outside the triplet grid")
        controls[:, k] = idx
        diffusion[:, k] = sqdt * np.einsum("mij,mj->mi", roots[idx], noise.normal[:, k])
        step = drifts[idx] * dt + diffusion[:, k]
        if atoms.shape[0]:
            n = poisson_inverse(noise.uniform[:, k], masses[idx] * dt)
            counts[:, k] = n
            jumps[:, k] = n @ atoms
            jump_factor[:, k] = np.prod(base[None] ** n[:, :, None], axis=1)
            if nonpositive.any():
                # even counts of a jump <= -1 must not come out positive
                jump_factor[np.any((n > 0) & nonpositive[None], axis=1), k] = 0.0
            step = step + jumps[:, k]
        x[:, k + 1] = x[:, k] + step
        s = s * _exp_factor(step, jumps[:, k], jump_factor[:, k])
    return Ensemble(x, controls, jumps, diffusion, counts, jump_factor, noise.path_ids, grid)


def simulate(theta: UncertaintySet, policy: Policy, grid: TimeGrid, seed: int, path_index: int = 0) -> SamplePath:
    """Single path; identical to row ``path_index`` of any ensemble with the same seed."""
    return simulate_ensemble(theta, policy, grid, seed, 1, start=path_index).path(0)


def stochastic_exponential(x) -> PricePath:
    """Discrete Doléans-Dade exponential ``s[k+1] = s[k] (1 + Δx[k])``.

    Accepts an array of shape ``(..., N+1, d)``, a :class:`SamplePath` or an
    :class:`Ensemble`.  For simulated paths the step's jumps enter as separate
    factors ``(1 + z)`` after the continuous increment, so several jumps in
    one step compound instead of adding.
    """
    if isinstance(x, (SamplePath, Ensemble)):
        factors = _exp_factor(np.diff(x.x, axis=-2), x.jumps, x.jump_factor)
        x = x.x
    else:
        x = np.asarray(x, dtype=float)
        factors = _exp_factor(np.diff(x, axis=-2))
    if np.any(factors <= 0):
        bad = np.argwhere(factors <= 0)[0]
        raise PositivityError(f"non-positive exponential factor at index {tuple(bad)}")
    ones = np.ones(x.shape[:-2] + (1, x.shape[-1]))
    return PricePath(np.concatenate([ones, np.cumprod(factors, axis=-2)], axis=-2))


def linear_price(x) -> PricePath:
    """Arithmetic model ``S = 1 + X``."""
    x = x.x if isinstance(x, (SamplePath, Ensemble)) else np.asarray(x, dtype=float)
    return PricePath(1.0 + x)


def price_path(x, price_map: str = "exponential") -> PricePath:
    if price_map == "exponential":
        return stochastic_exponential(x)
    if price_map == "linear":
        return linear_price(x)
    raise ValueError(f"unknown price map {price_map!r}")


def stochastic_integral(H, s) -> np.ndarray:
    """Left-endpoint sums ``(H•S)[m] = Σ_{k<m} H[k] · (s[k+1] - s[k])``.

    ``H`` has shape ``(..., N, d)`` and ``s`` shape ``(..., N+1, d)``; the
    result has shape ``(..., N+1)`` and starts at 0.
    """
    H = getattr(H, "H", H)
    s = getattr(s, "s", s)
    H = np.asarray(H, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if H.ndim == 1:
        H = H[:, None]
    if H.shape[-2] != s.shape[-2] - 1 or H.shape[-1] != s.shape[-1]:
        raise ValueError(f"strategy shape {H.shape} does not match price path {s.shape}")
    gains = np.sum(H * np.diff(s, axis=-2), axis=-1)
    zero = np.zeros(gains.shape[:-1] + (1,))
    return np.concatenate([zero, np.cumsum(gains, axis=-1)], axis=-1)


def write_ensemble_csv(path, ens: Ensemble, s: Optional[np.ndarray] = None, header: Sequence[str] = ()) -> None:
    """One row per (path, step): path id, t, X components, S components, control.

    Extra ``header`` lines are written first as ``# ...`` comments.  The
    control at step ``k`` is the triplet used on ``(t_k, t_{k+1}]``; the last
    row of each path carries ``-1``.
    """
    if s is None:
        s = stochastic_exponential(ens).s
    d = ens.x.shape[-1]
    t = ens.grid.times
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# grid T={ens.grid.T!r} N={ens.grid.N}\n")
        w = csv.writer(fh)
        w.writerow(["path", "t"] + [f"x{i}" for i in range(d)] + [f"s{i}" for i in range(d)] + ["control"])
        for m, pid in enumerate(ens.path_ids):
            for k in range(ens.grid.N + 1):
                ctrl = int(ens.controls[m, k]) if k < ens.grid.N else -1
                w.writerow([int(pid), repr(float(t[k]))] + [repr(float(v)) for v in ens.x[m, k]]
                           + [repr(float(v)) for v in s[m, k]] + [ctrl])


def read_ensemble_csv(path) -> dict:
    """Inverse of :func:`write_ensemble_csv` (jump marks are not stored)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    head, body = rows[0], rows[1:]
    d = sum(1 for h in head if h.startswith("x"))
    data = np.array(body, dtype=float)
    ids = np.unique(data[:, 0]).astype(np.int64)
    n_t = int(np.sum(data[:, 0] == ids[0]))
    data = data.reshape(ids.size, n_t, -1)
    return {
        "path_ids": ids,
        "t": data[0, :, 1],
        "x": data[:, :, 2:2 + d],
        "s": data[:, :, 2 + d:2 + 2 * d],
        "controls": data[:, :-1, -1].astype(np.intp),
    }
