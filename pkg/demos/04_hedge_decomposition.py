# The hedge H = c^{SY} (c^S)^+ from two routes.
#
# Analytic: Itô on Y = v(t, X) with the pricer's worst-case triplet.
# Empirical: realized covariation of the observed (S, Y) path, jumps
# truncated, differentiated against the trace clock with 0/0 = 0.

import numpy as np

from robusthedge import decomposition as dec
from robusthedge import robust_pricer as rp
from robusthedge.levy_model import parametric_theta
from robusthedge.path_engine import TimeGrid, coarsen_noise, draw_noise, simulate_ensemble, stochastic_exponential

theta = parametric_theta((0.1, 0.3, 5))
fine_N = 2**14
noise = draw_noise(4, np.arange(200), fine_N, 1, 0)

print("   N    median mean |H_emp - H_ana|")
prev = None
for N in (2**10, 2**12, 2**14):
    grid = TimeGrid(1.0, N)
    lat = rp.Lattice.for_theta(theta, grid, 801)
    _, vf = rp.price(rp.call(1.0), theta, lat)
    # the same Brownian paths on each grid
    ens = simulate_ensemble(theta, rp.argmax_policy(vf, lat), grid, 4, noise=coarsen_noise(noise, fine_N // N))
    s = stochastic_exponential(ens).s
    y = rp.value_along_path(vf, s, lat).y
    ana = dec.analytic_strategy(vf, lat, theta)(ens.x, s)
    err = [np.mean(np.abs(dec.empirical_strategy(s[m], y[m], grid.dt).H - ana[m])[8:]) for m in range(len(s))]
    med = float(np.median(err))
    print(f"{N:6d}  {med:.4f}" + (f"   ratio {med / prev:.3f}" if prev else ""))
    prev = med

# with a rank-deficient diffusion the pseudoinverse gives the minimal-norm hedge
c_s = np.array([[1.0, 1.0], [1.0, 1.0]])
print("\nminimal-norm H:", dec.hedge_ratio(np.array([2.0, 2.0]), c_s).H)
