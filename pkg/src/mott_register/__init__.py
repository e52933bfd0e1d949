"""Bose-Hubbard register dynamics, continuous-measurement purification and
finite-temperature register fidelity for bosons in optical lattices."""

from mott_register.fock import FockBasis, apply_hop, dimension
from mott_register.hamiltonian import (
    ModelParams,
    build_hamiltonian,
    hole_percolation_probability,
    trap_constraint_ok,
    tunneling_from_depth,
)

__version__ = "0.1.0"

__all__ = [
    "FockBasis",
    "ModelParams",
    "apply_hop",
    "build_hamiltonian",
    "dimension",
    "hole_percolation_probability",
    "trap_constraint_ok",
    "tunneling_from_depth",
]
