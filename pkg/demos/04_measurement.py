# %% [markdown]
# # Continuous measurement of register defects
#
# Faulty configurations with a doubly occupied site are coupled by a drive to
# a lossy auxiliary level. While no photon is seen the register relaxes into
# the target state on the time scale 1/kappa, independent of its size.

# %%
import warnings

import numpy as np

from _plot import pyplot, save
from mott_register import measurement as ms

fid = {}
for K in (11, 51, 101):
    p = ms.MeasurementParams(Omega=4e4, gamma=1e6, U=500.0, J=1.0, K=K, delta=0.003)
    print(f"K = {K:>3}: kappa = {p.kappa:.3f} J, regime ok = {ms.good_regime_check(p).ok}")
    rho0 = ms.GroundManifoldState.from_ground_state(K, 1.0, 500.0)
    t = np.linspace(0, 5 / p.kappa, 1001)
    out = ms.evolve_conditional(p, rho0, t)
    fid[K] = (t * p.kappa, out.fidelity)
    print(f"         t_sat kappa = {ms.saturation_time(t, out.fidelity) * p.kappa:.3f}")

# %% Trajectories at finite detector efficiency
K = 101
t = np.linspace(0, 20, 201)
runs = {}
for eta in (1.0, 0.5):
    p = ms.MeasurementParams(Omega=4e4, gamma=1e6, U=500.0, J=1.0, K=K, delta=0.003, eta=eta)
    rho0 = ms.GroundManifoldState.from_ground_state(K, 1.0, 500.0)
    ens = ms.simulate_trajectories(p, rho0, t / p.kappa, 200, seed=1)
    runs[eta] = ens.null_mean
    print(f"eta = {eta}: null-record fidelity at 20/kappa = {ens.null_mean[-1]:.5f}")

# %% After switching the measurement off the register oscillates again
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    free = ms.post_measurement_free_evolution(p, np.linspace(0, 0.1, 500))
print(f"free evolution minimum {free.min():.4f}")

# %%
plt = pyplot()
if plt:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3))
    for K, (x, F) in fid.items():
        a.plot(x, F, label=f"K = {K}")
    a.set(xlabel="t kappa", ylabel="F")
    a.legend()
    for eta, F in runs.items():
        b.plot(t, F, label=f"eta = {eta}")
    b.set(xlabel="t kappa", ylabel="F (no detection)")
    b.legend()
    save(fig, "measurement.png")
