"""Escape from the lower well of the one-mode reduction: action, exits and Kramers.

Run: python3 demos/02_escape_times.py   (about a minute; 300 paths per noise level)
"""
import math
import warnings

import numpy as np

from nfldp import ExitExperiment, NoiseConfig, first_exit, homogeneous_bistable_model, \
    kramers_scalar, quasipotential, scalar_model, scalar_reduction
from nfldp.cli import named_states
from nfldp.errors import HorizonWarning
from nfldp.simulate import exit_scaling_fit

model = scalar_model(homogeneous_bistable_model(d=1, cutoff=8))
pot = scalar_reduction(model)
lam0 = float(model.basis.lambdas[0])
lo, mid, hi = pot.critical_points()
barrier = float(pot.V(mid) - pot.V(lo))
print(f"one-mode potential: minima {lo:.4f}, {hi:.4f}, maximum {mid:.4f}, barrier {barrier:.5f}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore", HorizonWarning)
    qp = quasipotential([lo], [mid], model, T_grid=(2.5, 5.0, 10.0), M=200)
print(f"minimum action lower -> maximum: {qp.value:.5f}   2 dV / lambda0^2 = "
      f"{2 * barrier / lam0 ** 2:.5f}")
for T, a in qp.T_profile:
    print(f"  T = {T:5.1f}: {a:.5f}")

states = named_states(model)
radius = 0.98 * abs(mid - lo)
noise = NoiseConfig(model.basis, 1.0, seed=7)
eps_list, taus, cens = [], [], []
print("\nratio  eps      MC mean    Kramers")
for ratio in (3.0, 4.0, 5.0):
    eps = math.sqrt(2 * barrier / ratio) / lam0
    kr = kramers_scalar(pot, lam0, eps)
    exp = ExitExperiment(states["lower"], radius, (eps,), 300, 20 * kr["mean"])
    tau, c = first_exit(exp, model, noise, eps, threads=4)
    eps_list.append(eps)
    taus.append(tau)
    cens.append(c)
    print(f"{ratio:4.0f}   {eps:.4f}  {np.mean(tau):8.1f}  {kr['mean']:8.1f}")

fit = exit_scaling_fit(eps_list, taus, cens)
print(f"\neps^2 ln E[tau] extrapolated to eps -> 0: {fit['intercept']:.4f} "
      f"(95% band {fit['ci'][0]:.3f} .. {fit['ci'][1]:.3f}), action {qp.value:.4f}")
