# %% [markdown]
# # Commensurate filling in a harmonic trap
#
# With a trap the pair energies spread out and the fidelity oscillation
# dephases. The restricted basis keeps the unit-filled state plus all single
# particle-hole pairs, N (N - 1) + 1 states in total.

# %%
import numpy as np

from _plot import pyplot, save
from mott_register import FockBasis, ModelParams, build_hamiltonian
from mott_register.analytics import fidelity_commensurate_trap
from mott_register.dynamics import evolve_restricted, overlap_trace, restricted_basis, unit_filled_state

params = ModelParams(J=1.0, U=100.0, M=7, N=7, delta=2.0, boundary="periodic")
states, Hr = restricted_basis(params)
print("restricted dimension", len(states))

t = np.linspace(0, 10, 4001)
restricted = evolve_restricted(params, t)
closed = fidelity_commensurate_trap(t, 7, 1.0, 100.0, 2.0)
basis = FockBasis(7, 7)
full = overlap_trace(build_hamiltonian(params, basis), unit_filled_state(basis), t, unit_filled_state(basis))
print(f"restricted vs full basis: {np.abs(restricted - full).max():.5f}")
print(f"closed form vs restricted: {np.abs(closed - restricted).max():.5f}")

# %%
plt = pyplot()
if plt:
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, full, label="full basis", lw=1)
    ax.plot(t, restricted, label="restricted", lw=1)
    ax.plot(t, closed, "--", label="closed form", lw=1)
    ax.set(xlabel="t J", ylabel="F")
    ax.legend()
    save(fig, "trap.png")
