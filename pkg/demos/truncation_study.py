"""How much does cutting the KL expansion at level N move the posterior?

Every level reweights one shared bank of prior draws, so the differences
between levels are not swamped by independent Monte Carlo noise. A small bank
keeps this quick; the acceptance tests run the same study with 1e5 draws.

Run: python demos/truncation_study.py
"""

import numpy as np

from darcy_bayes import ForwardModel, GridSpec, NoiseModel, ObservationSetup, PriorSpec, ProblemData, sample_prior
from darcy_bayes.fields import Field
from darcy_bayes.observation import generate_data
from darcy_bayes.posterior import weak_error_study
from darcy_bayes.truncation import dn_l1_norm, fit_rate, truncation_sup_error, weierstrass_field, weierstrass_tail

grid = GridSpec(2, 32)
x1, x2 = grid.coordinates()
data = ProblemData(Field(grid, np.cos(x1) + np.sin(2 * x2) + np.cos(x1 + x2)))
setup = ObservationSetup.points(grid, [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (4.0, 4.0)])
model = ForwardModel(data, setup)
noise = NoiseModel.isotropic(setup.K, 0.2)
_, u_true = sample_prior(PriorSpec(2.0, 8, d=2), grid, np.random.default_rng(123))
y = generate_data(u_true, data, setup, noise, np.random.default_rng(5))

table = weak_error_study(PriorSpec(2.0, 8, seed=7, d=2), model, noise, y, [1, 2, 4], 4000, probe_level=4)
print(" N   e_mean_H1    +- MC      e_cov")
for r in table.rows:
    print(f"{r.N:2d}   {r.e_mean_h1:.3e}  {r.mc_std_error:.1e}   {r.e_cov_opnorm:.3e}")
print(f"fitted slope {table.mean_rate().slope:.2f}")

# the deterministic side: a lacunary series of Hoelder exponent 1/2
W = weierstrass_field(GridSpec(1, 4096), 0.5)
Ns = [4, 8, 16, 32, 64]
errs = [truncation_sup_error(W, N) for N in Ns]
print("sup errors", np.round(errs, 5), "tail sums", np.round([weierstrass_tail(0.5, N, 10) for N in Ns], 5))
print(f"slope {fit_rate(Ns, errs).slope:.3f} (tends to -0.5 as the series gets longer)")
print("Lebesgue constants / log N:", [round(float(dn_l1_norm(N) / np.log(N)), 3) for N in (8, 64, 512)])
