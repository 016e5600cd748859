"""
Superhedging strategy from the joint diffusion characteristics of ``(S, Y)``.

The hedge is ``H = c^{SY} (c^S)^+`` where ``c^S`` and ``c^{SY}`` are the
densities of the continuous covariations ``C^S`` and ``C^{SY}`` with respect to
the trace clock ``A = tr C^S``, and ``+`` is the Moore-Penrose pseudoinverse.

Two routes produce the densities:

* empirical: jump-truncated realized covariation of a sampled ``(S, Y)`` path,
  differentiated along a backward lag with the rule ``0/0 = 0``;
* analytic: Itô's formula for ``Y_t = v(t, X_t)`` with the optimal triplet of
  the pricer at each node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .levy_model import UncertaintySet
from .robust_pricer import Lattice, ValueFunction

PINV_TAU = 1e-10


@dataclass(frozen=True)
class JointCharacteristics:
    """``C[k]``: realized continuous covariation of ``(S, Y)`` up to ``t_k``,
    shape ``(N+1, d+1, d+1)`` with ``S`` first; ``A[k] = tr C^S[k]``."""

    C: np.ndarray
    A: np.ndarray
    excluded: np.ndarray  # (N,) increments dropped as jumps

    @property
    def d(self) -> int:
        return self.C.shape[-1] - 1


@dataclass(frozen=True)
class Strategy:
    """Hedge ratios ``H[k]`` used on ``(t_k, t_{k+1}]``, shape ``(..., N, d)``."""

    H: np.ndarray
    provenance: str


def pseudoinverse(m, tau: float = PINV_TAU) -> np.ndarray:
    """Moore-Penrose pseudoinverse of symmetric matrices (stacks allowed).

    Eigenvalues with ``|λ| <= tau · max|λ|`` are treated as zero.
    """
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    w, v = np.linalg.eigh(m)
    cut = tau * np.max(np.abs(w), axis=-1, keepdims=True)
    keep = np.abs(w) > cut
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (v * inv[..., None, :]) @ np.swapaxes(v, -1, -2)


def psd_projection(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    w, v = np.linalg.eigh(m)
    return (v * np.clip(w, 0.0, None)[..., None, :]) @ np.swapaxes(v, -1, -2)


def jump_threshold(ds: np.ndarray, dt: float, window: int, alpha_mult: float = 3.0, beta: float = 0.4) -> np.ndarray:
    """Per-increment thresholds ``u_j = alpha_mult · σ̂_j · dt^beta``.

    ``σ̂_j`` is the per-unit-time standard deviation of the ``window``
    increments strictly before ``j`` (largest over components).  With fewer
    than two past increments no truncation is applied.
    """
    mag = ds if ds.ndim == 2 else ds[:, None]
    n = mag.shape[0]
    c1 = np.concatenate([np.zeros((1, mag.shape[1])), np.cumsum(mag, axis=0)])
    c2 = np.concatenate([np.zeros((1, mag.shape[1])), np.cumsum(mag * mag, axis=0)])
    j = np.arange(n)
    lo = np.maximum(j - window, 0)
    cnt = (j - lo)[:, None].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = (c1[j] - c1[lo]) / cnt
        var = ((c2[j] - c2[lo]) - cnt * mean**2) / (cnt - 1)
    sig = np.sqrt(np.clip(np.max(np.where(cnt >= 2, var, 0.0), axis=1), 0, None)) / np.sqrt(dt)
    u = alpha_mult * sig * dt**beta
    return np.where((j >= 2) & (u > 0), u, np.inf)


def empirical_joint_characteristics(
    s,
    y,
    window: int = 32,
    dt: Optional[float] = None,
    threshold=None,
    alpha_mult: float = 3.0,
    beta: float = 0.4,
) -> JointCharacteristics:
    """Jump-truncated realized covariation of ``Z = (S, Y)`` along one path.

    ``s`` has shape ``(N+1, d)`` (or ``(N+1,)``) and ``y`` shape ``(N+1,)``.
    Increments with some ``|ΔS^i|`` above the threshold are dropped.  Pass
    ``threshold`` (scalar or per increment) to override the rolling rule,
    which needs ``dt``.
    """
    if window < 2:
        raise ValueError("covariation window must be at least 2")
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != s.shape[0]:
        raise ValueError("S and Y paths have different lengths")
    z = np.concatenate([s, y[:, None]], axis=1)
    dz = np.diff(z, axis=0)
    ds = dz[:, :-1]
    if threshold is None:
        if dt is None:
            raise ValueError("dt is needed for the rolling jump threshold")
        threshold = jump_threshold(ds, dt, window, alpha_mult, beta)
    u = np.broadcast_to(np.asarray(threshold, dtype=float), (ds.shape[0],))
    excluded = np.any(np.abs(ds) > u[:, None], axis=1)
    kept = np.where(excluded[:, None], 0.0, dz)
    outer = kept[:, :, None] * kept[:, None, :]
    C = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(outer, axis=0)])
    d = s.shape[1]
    A = np.trace(C[:, :d, :d], axis1=1, axis2=2)
    return JointCharacteristics(C, A, excluded)


def lebesgue_derivative(jc: JointCharacteristics, lag: int = 8, strict: bool = False, psd_tol: float = 1e-12):
    """Backward difference quotients ``ΔC/ΔA`` over ``lag`` steps, ``0/0 = 0``.

    Returns ``(c_s, c_sy)`` with shapes ``(N+1, d, d)`` and ``(N+1, d)``.  A
    non-PSD ``c_s`` is projected onto the PSD cone, or zeroed when ``strict``.
    """
    if lag < 1:
        raise ValueError("lag must be at least one grid step")
    C, A, d = jc.C, jc.A, jc.d
    n = C.shape[0]
    prev = np.maximum(np.arange(n) - lag, 0)
    dC = C - C[prev]
    dA = A - A[prev]
    flat = dA <= 0
    denom = np.where(flat, 1.0, dA)[:, None, None]
    ratio = np.where(flat[:, None, None], 0.0, dC / denom)
    c_s = ratio[:, :d, :d]
    c_sy = ratio[:, :d, d]
    c_s = 0.5 * (c_s + np.swapaxes(c_s, -1, -2))
    w = np.linalg.eigvalsh(c_s)
    bad = w.min(axis=-1) < -psd_tol * np.maximum(1.0, np.abs(w).max(axis=-1))
    if np.any(bad):
        fix = np.zeros_like(c_s[bad]) if strict else psd_projection(c_s[bad])
        c_s = c_s.copy()
        c_s[bad] = fix
    c_sy = np.where(np.isfinite(c_sy), c_sy, 0.0)
    return c_s, c_sy


def hedge_ratio(c_sy, c_s, provenance: str = "empirical") -> Strategy:
    """``H[k] = c_sy[k] · pinv(c_s[k])`` row-wise over any leading axes."""
    c_sy = np.asarray(c_sy, dtype=float)
    H = np.einsum("...i,...ij->...j", c_sy, pseudoinverse(c_s))
    return Strategy(H, provenance)


def empirical_strategy(s, y, dt: float, window: int = 32, lag: int = 8, strict: bool = False, **kw) -> Strategy:
    """Hedge for one path from its ``(S, Y)`` observations; ``H[k]`` uses data up to ``t_k``."""
    jc = empirical_joint_characteristics(s, y, window=window, dt=dt, **kw)
    c_s, c_sy = lebesgue_derivative(jc, lag, strict)
    st = hedge_ratio(c_sy[:-1], c_s[:-1], "empirical")
    return st


# --------------------------------------------------------------------------- #
# Analytic route
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class AnalyticFields:
    """Node fields at macro times ``0..N-1``, each shaped ``(N, n)``.

    ``c`` is the diffusion of the argmax triplet, ``grad`` the lattice
    gradient of ``v[k]``, ``c_s``/``c_sy`` the resulting characteristics at
    the node prices.  ``one_sided`` marks boundary nodes.
    """

    c: np.ndarray
    grad: np.ndarray
    c_s: np.ndarray
    c_sy: np.ndarray
    one_sided: np.ndarray


def value_gradient(v: np.ndarray, dx: float) -> np.ndarray:
    """Central differences along the last axis, one-sided at both ends."""
    g = np.empty_like(v)
    g[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * dx)
    g[..., 0] = (v[..., 1] - v[..., 0]) / dx
    g[..., -1] = (v[..., -1] - v[..., -2]) / dx
    return g


def _jacobian(s, lattice: Lattice):
    # dS^c = J dX^c
    return s if lattice.price_map == "exponential" else np.ones_like(s)


def analytic_characteristics(vf: ValueFunction, lattice: Lattice, theta: UncertaintySet) -> AnalyticFields:
    """``c_s = J c J``, ``c_sy = J c ∂_y v`` with ``c`` of the argmax triplet."""
    N = lattice.grid.N
    c = theta.diffusions()[:, 0, 0][vf.argmax]
    grad = value_gradient(vf.v[:N], lattice.dx)
    jac = _jacobian(lattice.prices, lattice)
    one_sided = np.zeros(lattice.n, dtype=bool)
    one_sided[[0, -1]] = True
    return AnalyticFields(c, grad, jac**2 * c, jac * c * grad, one_sided)


def analytic_along_path(fields: AnalyticFields, s, lattice: Lattice):
    """Characteristics at the path states ``s[..., k]``, ``k < N``.

    ``c`` comes from the nearest interior node (as the argmax policy does),
    ``∂_y v`` is interpolated linearly, and the Jacobian uses the realized
    price.  Returns ``(c_s, c_sy)`` shaped ``(..., N, 1, 1)`` and ``(..., N, 1)``.
    """
    s = np.asarray(getattr(s, "s", s), dtype=float)
    if s.shape[-1] == 1 and s.shape[-2] == lattice.grid.N + 1:
        s = s[..., 0]
    N = lattice.grid.N
    sk = s[..., :N]
    y = lattice.from_price(sk)
    y = np.clip(np.where(np.isfinite(y), y, lattice.nodes[0]), lattice.nodes[0], lattice.nodes[-1])
    near = np.clip(np.rint((y - lattice.nodes[0]) / lattice.dx).astype(np.intp), 1, lattice.n - 2)
    steps = np.arange(N)
    c = fields.c[steps, near]
    grad = np.empty(y.shape)
    for k in range(N):
        grad[..., k] = np.interp(y[..., k], lattice.nodes, fields.grad[k])
    jac = _jacobian(sk, lattice)
    return (jac**2 * c)[..., None, None], (jac * c * grad)[..., None]


def analytic_strategy(vf: ValueFunction, lattice: Lattice, theta: UncertaintySet):
    """Strategy source ``(x, s) -> H`` along simulated paths via the analytic route."""
    fields = analytic_characteristics(vf, lattice, theta)

    def source(x, s):
        c_s, c_sy = analytic_along_path(fields, s, lattice)
        return hedge_ratio(c_sy, c_s, "analytic").H

    source.provenance = "analytic"
    return source
