"""Bistable neural field: equilibria, noisy Galerkin paths and truncation error.

Run: python3 demos/01_galerkin_paths.py
"""
import numpy as np

from nfldp import NoiseConfig, SimConfig, homogeneous_bistable_model, simulate
from nfldp.cli import named_states
from nfldp.noise import ou_truncation_error
from nfldp.simulate import convergence_summary, galerkin_convergence

model = homogeneous_bistable_model(d=1, cutoff=15, xi=1.0)
states = named_states(model)
print(f"{model.n_modes} cosine modes, lambda_i^2 = exp(-|i|^2 / (4 pi))")
for name, st in states.items():
    print(f"  {name:6s} u_0 = {st.u_star[0]:+.4f}  {st.classification:8s} "
          f"morse index {st.morse_index}")

# a handful of paths from the lower state; noise is keyed by (seed, path id)
noise = NoiseConfig(model.basis, 0.3, seed=1)
traj = simulate(SimConfig(model, noise, 1e-3, 10.0, states["lower"].u_star),
                path_ids=np.arange(8), save_every=100)
sup = traj.sup_norm()
# the Gronwall envelope grows like e^{Lip(f) T}: a guarantee, not an estimate
print(f"\n8 paths, eps = 0.3, T = 10: sup ||u|| in [{sup.min():.3f}, {sup.max():.3f}], "
      f"inside the a-priori envelope: {bool(np.all(sup <= traj.envelope))}")

# truncation: N-mode runs against the 32-mode run on shared noise streams
big = homogeneous_bistable_model(d=1, cutoff=31)
u0 = named_states(big)["lower"].u_star.copy()
u0[1:] += 0.3 * big.basis.lambdas[1:]
rows = galerkin_convergence(big, NoiseConfig(big.basis, 0.5), [4, 8, 16], 2.0, 1e-3, u0,
                            seeds=range(3))
print("\nN   mean sup_t l2 error   mean envelope")
for n in (4, 8, 16):
    rs = [r for r in rows if r["N"] == n]
    print(f"{n:<3d} {np.mean([r['l2'] for r in rs]):.3e}             "
          f"{np.mean([r['envelope'] for r in rs]):.3e}")
summ = convergence_summary(rows)
print("strictly decreasing on every seed:", all(summ["decreasing_l2"].values()))

print("\nOU tail: E sup ||O^32 - O^N|| against b_N")
for n in (4, 8, 16):
    r = ou_truncation_error(NoiseConfig(big.basis, 1.0), n, 32, 5.0, 0.01, 100)
    print(f"  N={n:2d}: {r['mean']:.3e} / {r['b_N']:.3e} = {r['ratio']:.2f}")
