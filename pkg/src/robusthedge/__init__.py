"""Robust superhedging under Lévy-type model uncertainty.

Modules: ``levy_model`` (triplets and uncertainty sets), ``path_engine``
(simulation), ``robust_pricer`` (lattice dynamic programming),
``decomposition`` (hedge ratios), ``verification`` (empirical checks),
``config`` and ``cli``.
"""

from .levy_model import (
    ConditionError,
    LevyMeasure,
    LevyTriplet,
    TruncationFunction,
    UncertaintySet,
    build_theta,
    check_saturation,
    drift_completion,
    has_dominating_diffusion,
    is_integrable_jumps,
    parametric_theta,
)
from .path_engine import TimeGrid, simulate, simulate_ensemble, stochastic_exponential, stochastic_integral
from .robust_pricer import Lattice, Payoff, price
from .decomposition import analytic_strategy, empirical_strategy, hedge_ratio, pseudoinverse

__version__ = "0.1.0"
