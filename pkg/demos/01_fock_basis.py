# %% [markdown]
# # Fock basis and Hamiltonian
#
# Occupation vectors are stored largest-first and ranked with binomial
# coefficients, so a state maps to its row index without a lookup table.

# %%
from mott_register import FockBasis, ModelParams, build_hamiltonian, dimension
from mott_register.hamiltonian import trap_constraint_ok, tunneling_from_depth

basis = FockBasis(2, 3)
for i, s in enumerate(basis.states):
    print(i, tuple(s), basis.rank(s))

# %% Nine atoms on eleven sites
print("dimension(9, 11) =", dimension(9, 11))

# %% A small trapped chain
params = ModelParams(J=1.0, U=30.0, M=7, N=5, delta=5.0, K=3)
H = build_hamiltonian(params)
print("H:", H.shape, "nnz", H.nnz, "symmetric", abs(H - H.T).max() == 0)
print("trap energies", params.trap_energies)
print("register sites", params.register_sites.tolist())
print("trap weak enough to ignore edge holes?", trap_constraint_ok(params))

# %% Tunnelling from lattice depth (recoil units)
for depth in (5, 10, 20):
    print(f"V0 = {depth:>2} E_R  ->  J = {tunneling_from_depth(depth):.4e} E_R")
