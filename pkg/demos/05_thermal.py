# %% [markdown]
# # Register fidelity at finite temperature
#
# Doublons appear once T approaches U minus the trap energy at the edge of the
# cloud; holes in the register appear once atoms can move past the cloud
# edge. The smaller of the two temperatures sets where the fidelity drops.

# %%

from _plot import pyplot, save
from mott_register import FockBasis, ModelParams, build_hamiltonian
from mott_register.dynamics import RegisterProjector
from mott_register.thermal import characteristic_temperatures, diagonalize, temperature_grid, thermal_fidelity

params = ModelParams(J=1.0, U=30.0, M=7, N=5, delta=5.0, K=3)
basis = FockBasis(5, 7)
H = build_hamiltonian(params, basis)
spec = diagonalize(H, mode="full", projector=RegisterProjector(params, basis))
temps = characteristic_temperatures(params.U, params.delta, params.N, params.K)
print(f"dimension {basis.size}; T_d = {temps.T_d}, T_h = {temps.T_h}, T_max = {temps.T_max}")

T = temperature_grid(temps.T_h)
F = thermal_fidelity(spec, T)
print(f"F(T = 0) = {thermal_fidelity(spec, 0.0):.5f}")
print(f"F(T_max) = {thermal_fidelity(spec, temps.T_max):.5f}")

# %% The larger chain only gives the zero-temperature value at desk scale
big = ModelParams(J=1.0, U=60.0, M=11, N=9, delta=3.375, K=5)
bb = FockBasis(9, 11)
ground = diagonalize(build_hamiltonian(big, bb), mode="lowest", k=1, projector=RegisterProjector(big, bb))
print(f"M = 11, N = 9 ground-state register fidelity {ground.overlaps[0]:.5f}")
print("characteristic temperatures", characteristic_temperatures(60.0, 3.375, 9, 5))

# %%
plt = pyplot()
if plt:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.semilogx(T, F)
    for v, lab in ((temps.T_d, "T_d"), (temps.T_h, "T_h")):
        ax.axvline(v, ls=":", color="k")
        ax.text(v, 0.9, lab)
    ax.set(xlabel="k_B T / J", ylabel="F")
    save(fig, "thermal.png")
