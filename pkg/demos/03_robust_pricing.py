# Robust prices by dynamic programming on a log-price lattice.
#
# Each backward step takes the best of the explicit generator steps of all
# triplets, node by node.  For a call under a volatility band the worst case
# is the top volatility; with jumps the answer is no longer a closed form.

import numpy as np
from scipy.stats import norm

from robusthedge import robust_pricer as rp
from robusthedge.levy_model import parametric_theta
from robusthedge.path_engine import TimeGrid


def bs_call(sigma, s=1.0, k=1.0, T=1.0):
    d1 = (np.log(s / k) + 0.5 * sigma**2 * T) / (sigma * np.sqrt(T))
    return s * norm.cdf(d1) - k * norm.cdf(d1 - sigma * np.sqrt(T))


grid = TimeGrid(1.0, 256)
call = rp.call(1.0)

band = parametric_theta((0.1, 0.3, 5))
lat = rp.Lattice.for_theta(band, grid, 801)
p, vf = rp.price(call, band, lat)
print(f"band call {p:.6f}, Black-Scholes at sigma=0.3 {bs_call(0.3):.6f}  ({lat.substeps} substeps, dx={lat.dx:.4f})")

# a digital is not convex: the worst volatility switches sides at the strike
p_dig, vf_dig = rp.price(rp.digital(1.0), band, lat)
sig = np.sqrt(band.diffusions()[:, 0, 0])
k = grid.N // 2
for s in (0.8, 0.95, 1.05, 1.25):
    j = int(np.argmin(np.abs(lat.prices - s)))
    print(f"digital, t=0.5, S={s}: worst sigma {sig[vf_dig.argmax[k, j]]:.2f}")

jumps = parametric_theta((0.15, 0.3, 5), [(-0.5, 0.0, 1.0, 5)])
latj = rp.Lattice.for_theta(jumps, grid, 801)
pj, vfj = rp.price(call, jumps, latj)
worst = jumps[int(vfj.argmax[0, latj.origin])]
print(f"\njump model call {pj:.6f}; worst triplet at the money: c={worst.c[0, 0]:.4f}, intensity {worst.F.total_mass:.2f}")

# dynamic programming principle: restart from the midpoint values
print("restart defect:", rp.dpp_check(vfj, 0, grid.N // 2, jumps, latj))
