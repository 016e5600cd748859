"""
Lévy triplets, truncation functions and uncertainty sets.

A nonlinear Lévy model is described by a set of triplets ``(b, c, F)``.  Only
finite-activity jump measures are supported: ``F`` is a finite list of atoms
with positive masses.  The set of admissible triplets is generated from a set
of pairs ``(c, F)`` by completing the drift so that the canonical process is a
(sigma) martingale.

Three structural conditions decide whether the robust superhedging machinery
applies to such a set:

* integrable large jumps, ``∫ (|x|² ∧ |x|) F(dx) < ∞``;
* dominating diffusion, i.e. either no jumps or a strictly positive definite
  diffusion matrix;
* saturation, i.e. closure of the pair set under positive reweightings
  ``ψF`` of the jump measure.  Only falsification is possible numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

EIG_TOL = 1e-10
PSD_TOL = 1e-10


class ConditionError(ValueError):
    """A pair of an uncertainty set violates a structural condition."""

    def __init__(self, index: int, condition: str, detail: str = ""):
        self.index = index
        self.condition = condition
        msg = f"pair {index}: {condition} violated"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TruncationFunction:
    """Sharp cutoff ``h(x) = x 1{|x| <= radius}`` (Euclidean norm)."""

    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("truncation radius must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return x if abs(x) <= self.radius else np.zeros_like(x)
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.where(norm <= self.radius, x, 0.0)


@dataclass(frozen=True, eq=False)
class LevyMeasure:
    """Finite-activity Lévy measure ``F = Σ mass_i δ_{location_i}``.

    ``locations`` has shape ``(n_atoms, d)`` and ``masses`` shape ``(n_atoms,)``.
    """

    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        mass = np.array(self.masses, dtype=float).reshape(-1)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1)
        if loc.shape[0] != mass.shape[0]:
            raise ValueError("locations and masses must have the same length")
        if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
            raise ValueError("atom masses must be positive and finite")
        if mass.size and np.any(np.all(loc == 0.0, axis=1)):
            raise ValueError("a Lévy measure has no mass at the origin")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "masses", _frozen(mass))

    @classmethod
    def zero(cls, d: int = 1) -> "LevyMeasure":
        return cls(np.zeros((0, d)), np.zeros(0))

    @classmethod
    def atom(cls, location, mass: float) -> "LevyMeasure":
        return cls(np.atleast_1d(np.asarray(location, dtype=float))[None, :], [mass])

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def is_zero(self) -> bool:
        return self.masses.size == 0

    def reweight(self, psi: Callable[[np.ndarray], np.ndarray]) -> "LevyMeasure":
        """Return ``ψF``; ``psi`` maps an ``(n, d)`` array of locations to weights."""
        if self.is_zero:
            return self
        w = np.asarray(psi(self.locations), dtype=float).reshape(-1)
        w = np.broadcast_to(w, self.masses.shape)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("density must be strictly positive on the atoms")
        return LevyMeasure(self.locations, self.masses * w)

    def integral(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """``∫ g dF`` for ``g`` acting row-wise on locations."""
        if self.is_zero:
            return np.zeros(np.shape(g(np.zeros((1, self.dim))))[1:])
        vals = np.asarray(g(self.locations), dtype=float)
        return np.tensordot(self.masses, vals, axes=(0, 0))

    def same_as(self, other: "LevyMeasure", rtol: float = 1e-12) -> bool:
        if self.masses.shape != other.masses.shape or self.dim != other.dim:
            return False
        if self.is_zero:
            return True
        a = np.lexsort(self.locations.T[::-1])
        b = np.lexsort(other.locations.T[::-1])
        return bool(
            np.allclose(self.locations[a], other.locations[b], rtol=rtol, atol=0)
            and np.allclose(self.masses[a], other.masses[b], rtol=rtol, atol=0)
        )

    def __repr__(self):
        atoms = ", ".join(
            f"{tuple(np.round(x, 6))}:{m:g}" for x, m in zip(self.locations, self.masses)
        )
        return f"LevyMeasure({{{atoms}}})"


def _as_matrix(c, d: Optional[int] = None) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.shape[0] != c.shape[1]:
        raise ValueError(f"diffusion matrix must be square, got {c.shape}")
    if d is not None and c.shape[0] != d:
        raise ValueError(f"diffusion matrix has dimension {c.shape[0]}, expected {d}")
    return 0.5 * (c + c.T)


def is_psd(c, tol: float = PSD_TOL) -> bool:
    c = _as_matrix(c)
    w = np.linalg.eigvalsh(c)
    scale = max(1.0, float(np.max(np.abs(w))))
    return bool(w.min() >= -tol * scale)


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Differential characteristics ``(b, c, F)`` of a Lévy process."""

    b: np.ndarray
    c: np.ndarray
    F: LevyMeasure
    truncation: TruncationFunction = field(default_factory=TruncationFunction)

    def __post_init__(self):
        c = _as_matrix(self.c)
        d = c.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.size == 1 and d > 1:
            raise ValueError("drift dimension does not match the diffusion matrix")
        if b.shape != (d,):
            raise ValueError(f"drift must have shape ({d},)")
        if not self.F.is_zero and self.F.dim != d:
            raise ValueError("jump measure dimension does not match")
        if not is_psd(c):
            raise ValueError("diffusion matrix is not positive semidefinite")
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def effective_drift(self) -> np.ndarray:
        """Drift of the compound-Poisson representation, ``b - ∫ h dF``.

        A finite-activity process is ``X_t = (b - ∫h dF) t + √c W_t + Σ ΔX``.
        """
        if self.F.is_zero:
            return self.b.copy()
        return self.b - self.F.integral(self.truncation)


def is_integrable_jumps(F: LevyMeasure) -> tuple[bool, float]:
    """Return ``(True, ∫ (|x|² ∧ |x|) F(dx))``; always finite for atomic measures."""
    if F.is_zero:
        return True, 0.0
    r = np.linalg.norm(F.locations, axis=1)
    value = float(np.sum(F.masses * np.minimum(r * r, r)))
    return bool(np.isfinite(value)), value


def drift_completion(F: LevyMeasure, h: TruncationFunction, d: Optional[int] = None) -> np.ndarray:
    """Drift making the triplet a martingale triplet: ``b = -∫ (x - h(x)) F(dx)``."""
    ok, _ = is_integrable_jumps(F)
    if not ok:
        raise ValueError("jump measure does not have integrable large jumps")
    if F.is_zero:
        return np.zeros(d if d is not None else F.dim)
    return 0.0 - F.integral(lambda x: x - h(x))  # 0 - 0 is +0


def has_dominating_diffusion(c, F: LevyMeasure, eig_tol: float = EIG_TOL) -> bool:
    """True iff ``F = 0`` or ``c`` is strictly positive definite.

    Positivity is relative: the smallest eigenvalue must exceed ``eig_tol``
    times the largest one.
    """
    if F.is_zero:
        return True
    w = np.linalg.eigvalsh(_as_matrix(c))
    if w.max() <= 0:
        return False
    return bool(w.min() > eig_tol * w.max())


Membership = Callable[[np.ndarray, LevyMeasure], bool]


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Discretized pair set together with the induced martingale triplets.

    ``membership`` decides whether an arbitrary pair ``(c, F)`` belongs to the
    (possibly infinite) pair set that the finite grid discretizes.  When it
    is not given, membership means equality with one of the listed pairs.
    """

    prime_elements: tuple
    truncation: TruncationFunction
    derived_triplets: tuple
    membership: Optional[Membership] = None

    @property
    def dim(self) -> int:
        return self.derived_triplets[0].dim

    def __len__(self):
        return len(self.derived_triplets)

    def __iter__(self):
        return iter(self.derived_triplets)

    def __getitem__(self, i) -> LevyTriplet:
        return self.derived_triplets[i]

    def contains(self, c, F: LevyMeasure) -> bool:
        if self.membership is not None:
            return bool(self.membership(_as_matrix(c), F))
        c = _as_matrix(c)
        for c0, F0 in self.prime_elements:
            if c0.shape == c.shape and np.allclose(c0, c, rtol=1e-12, atol=0) and F0.same_as(F):
                return True
        return False

    @property
    def atom_universe(self) -> np.ndarray:
        """Distinct atom locations over all triplets, shape ``(n, d)``."""
        locs = [t.F.locations for t in self.derived_triplets if not t.F.is_zero]
        if not locs:
            return np.zeros((0, self.dim))
        return np.unique(np.concatenate(locs), axis=0)

    def mass_matrix(self) -> np.ndarray:
        """Masses of every triplet on ``atom_universe``, shape ``(n_triplets, n_atoms)``."""
        universe = self.atom_universe
        out = np.zeros((len(self), universe.shape[0]))
        for i, t in enumerate(self.derived_triplets):
            for loc, m in zip(t.F.locations, t.F.masses):
                j = np.flatnonzero(np.all(universe == loc, axis=1))[0]
                out[i, j] += m
        return out

    def effective_drifts(self) -> np.ndarray:
        return np.array([t.effective_drift for t in self.derived_triplets])

    def diffusions(self) -> np.ndarray:
        return np.array([t.c for t in self.derived_triplets])

    def with_truncation(self, h: TruncationFunction) -> "UncertaintySet":
        """Same pair set, drifts recompleted for another truncation function."""
        return build_theta(
            [(c, F) for c, F in self.prime_elements], h, membership=self.membership
        )


def build_theta(
    prime: Sequence[tuple],
    h: Optional[TruncationFunction] = None,
    strict: bool = True,
    membership: Optional[Membership] = None,
) -> UncertaintySet:
    """Build the martingale triplet set from pairs ``(c, F)``.

    Raises :class:`ConditionError` naming the first offending pair and the
    condition (``positive semidefinite``, ``integrable jumps`` or, when
    ``strict``, ``dominating diffusion``).
    """
    h = h or TruncationFunction()
    if len(prime) == 0:
        raise ValueError("uncertainty set must be nonempty")
    pairs, triplets = [], []
    d = None
    for i, (c, F) in enumerate(prime):
        c = _as_matrix(c)
        if d is None:
            d = c.shape[0]
        elif c.shape[0] != d:
            raise ConditionError(i, "dimension", f"expected d={d}")
        if F is None:
            F = LevyMeasure.zero(d)
        if not F.is_zero and F.dim != d:
            raise ConditionError(i, "dimension", "jump measure dimension mismatch")
        if not is_psd(c):
            raise ConditionError(i, "positive semidefinite", f"eigenvalues {np.linalg.eigvalsh(c)}")
        ok, _ = is_integrable_jumps(F)
        if not ok:
            raise ConditionError(i, "integrable jumps")
        if strict and not has_dominating_diffusion(c, F):
            raise ConditionError(i, "dominating diffusion", "jumps require strictly positive definite c")
        b = drift_completion(F, h, d)
        c.setflags(write=False)
        pairs.append((c, F))
        triplets.append(LevyTriplet(b, c, F, h))
    return UncertaintySet(tuple(pairs), h, tuple(triplets), membership)


def default_densities() -> list:
    """Constants 0.5 and 2 plus one atom-wise reweighting ``1 + |x|``."""
    return [
        lambda x: np.full(len(x), 0.5),
        lambda x: np.full(len(x), 2.0),
        lambda x: 1.0 + np.linalg.norm(x, axis=1),
    ]


@dataclass
class SaturationReport:
    passed: bool
    checked: int
    violation: Optional[tuple] = None  # (pair index, density index)
    note: str = (
        "falsification test over a finite density family; "
        "a pass does not prove saturation"
    )


def check_saturation(theta: UncertaintySet, densities: Optional[Iterable] = None) -> SaturationReport:
    """Look for a pair ``(c, F)`` with ``F != 0`` and a density ``ψ`` such that
    ``(c, ψF)`` leaves the pair set."""
    densities = list(default_densities() if densities is None else densities)
    checked = 0
    for i, (c, F) in enumerate(theta.prime_elements):
        if F.is_zero:
            continue
        for j, psi in enumerate(densities):
            G = F.reweight(psi)
            checked += 1
            if not theta.contains(c, G):
                return SaturationReport(False, checked, (i, j))
    return SaturationReport(True, checked)


def check_jump_support(theta: UncertaintySet) -> Optional[int]:
    """Index of the first triplet with an atom outside ``(-1, ∞)^d``, else None.

    Needed for the exponential price model to keep prices positive.
    """
    for i, t in enumerate(theta.derived_triplets):
        if not t.F.is_zero and np.any(t.F.locations <= -1.0):
            return i
    return None


def parametric_theta(
    sigma: tuple,
    atoms: Sequence[tuple] = (),
    h: Optional[TruncationFunction] = None,
    strict: bool = True,
) -> UncertaintySet:
    """One-dimensional family ``c = σ²`` with jump atoms of varying intensity.

    ``sigma`` is ``(lo, hi, steps)``; each entry of ``atoms`` is
    ``(location, lo, hi, steps[, grid_hi])`` for the intensity of an atom at
    a fixed location.  The grid is the product of all ranges; intensity zero
    drops the atom.  Membership of arbitrary pairs is decided against the
    continuous ranges.  ``hi`` may be ``inf`` (then ``grid_hi`` bounds the
    grid), so a family with intensity range ``[0, inf]`` is closed under
    positive reweighting.
    """
    s_lo, s_hi, s_n = sigma
    sig = np.linspace(s_lo, s_hi, int(s_n)) if int(s_n) > 1 else np.array([float(s_lo)])
    locs = np.array([float(a[0]) for a in atoms])
    grids = []
    for a in atoms:
        _, lo, hi, n = a[:4]
        if len(a) > 4:
            hi = a[4]
        if not np.isfinite(hi):
            raise ValueError(f"atom at {a[0]}: infinite intensity range needs a finite grid_hi")
        grids.append(np.linspace(lo, hi, int(n)) if int(n) > 1 else np.array([float(lo)]))
    return _product_theta(sig, locs, grids, [(a[1], a[2]) for a in atoms], (s_lo, s_hi), h, strict)


def _product_theta(sig, locs, grids, ranges, sig_range, h, strict):
    prime = []
    mesh = np.meshgrid(*grids, indexing="ij") if grids else []
    intensities = np.stack([m.ravel() for m in mesh], axis=1) if grids else np.zeros((1, 0))
    for s in sig:
        for lam in intensities:
            keep = lam > 0
            F = LevyMeasure(locs[keep], lam[keep]) if keep.any() else LevyMeasure.zero(1)
            prime.append((np.array([[s * s]]), F))

    tol = 1e-12

    def member(c, F):
        if c.shape != (1, 1):
            return False
        s = np.sqrt(max(c[0, 0], 0.0))
        if not (sig_range[0] - tol <= s <= sig_range[1] + tol):
            return False
        if F.is_zero:
            return all(lo <= 0 for lo, _ in ranges)
        for x, m in zip(F.locations[:, 0], F.masses):
            j = np.flatnonzero(np.isclose(locs, x, rtol=0, atol=tol))
            if j.size == 0:
                return False
            lo, hi = ranges[j[0]]
            if not (lo - tol <= m <= hi + tol):
                return False
        present = set(np.round(F.locations[:, 0], 12))
        return all(lo <= 0 or np.round(x, 12) in present for x, (lo, _) in zip(locs, ranges))

    return build_theta(prime, h, strict=strict, membership=member)
