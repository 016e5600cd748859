# Building a set of Lévy triplets and checking the structural conditions.
#
# A model is a set of pairs (c, F): diffusion c and a finite jump measure F.
# The drift is not free: it is completed so that X is a martingale, and the
# completed drift depends on the truncation function h.

import numpy as np

from robusthedge.levy_model import (
    ConditionError,
    LevyMeasure,
    TruncationFunction,
    build_theta,
    check_saturation,
    drift_completion,
    has_dominating_diffusion,
    is_integrable_jumps,
    parametric_theta,
)

h = TruncationFunction(1.0)

# jumps inside the truncation radius need no drift, jumps outside do
for loc in (0.5, 2.0):
    F = LevyMeasure.atom(loc, 0.7)
    print(f"atom at {loc}: integral {is_integrable_jumps(F)[1]:.3f}, completed drift {drift_completion(F, h)[0]:+.3f}")

# jumps must be dominated by a strictly positive diffusion
print("c=1 with jumps:", has_dominating_diffusion(np.array([[1.0]]), LevyMeasure.atom(1.0, 1.0)))
print("c=0 with jumps:", has_dominating_diffusion(np.array([[0.0]]), LevyMeasure.atom(1.0, 1.0)))
try:
    build_theta([(0.0, LevyMeasure.atom(1.0, 1.0))])
except ConditionError as e:
    print("build_theta refuses:", e)

# a volatility band with a crash atom of uncertain intensity
theta = parametric_theta((0.15, 0.3, 5), [(-0.5, 0.0, 1.0, 5)])
print(f"\n{len(theta)} triplets; first {theta[0]}\nlast  {theta[-1]}")

# saturation is checked by falsification: reweight the jump measure and ask
# whether the result is still in the set.  A bounded intensity range fails.
rep = check_saturation(theta)
print("bounded intensities saturated?", rep.passed, rep.violation)
open_range = parametric_theta((0.15, 0.3, 5), [(-0.5, 0.0, np.inf, 5, 1.0)])
print("intensities in [0, inf) saturated?", check_saturation(open_range).passed)

# changing h moves only the drift; the effective compound-Poisson drift is unchanged
t1 = build_theta([(0.04, LevyMeasure.atom(0.75, 2.0))], TruncationFunction(1.0))[0]
t2 = build_theta([(0.04, LevyMeasure.atom(0.75, 2.0))], TruncationFunction(0.5))[0]
print(f"\nb with r=1: {t1.b[0]:+.3f}, r=0.5: {t2.b[0]:+.3f}; effective drift {t1.effective_drift[0]:+.3f} / {t2.effective_drift[0]:+.3f}")
