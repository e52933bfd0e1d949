"""Bose-Hubbard Hamiltonian on a fixed-N Fock space, plus lattice formulas.

Energies are in arbitrary units with hbar = 1; most callers set ``J = 1``.
The trap offset is ``eps(j) = delta * j**2`` with ``j = 0`` at the trap
minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from mott_register.fock import FockBasis

DEFAULT_MAX_DIMENSION = 2_000_000


class DimensionError(ValueError):
    """Requested Hilbert space exceeds the configured memory budget."""


@dataclass(frozen=True)
class ModelParams:
    """Lattice, trap and interaction parameters.

    ``M`` is the number of sites per dimension and ``N`` the atom number.
    ``K`` is the (odd) register size, counted around the trap centre.
    ``site_origin="center"`` puts ``j = 0`` on the middle site (between the two
    middle sites for even ``M``); ``"left"`` puts it on site 0.
    """

    J: float
    U: float
    M: int
    N: int
    delta: float = 0.0
    d: int = 1
    K: Optional[int] = None
    boundary: str = "open"
    site_origin: str = "center"

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if not self.U > 0:
            raise ValueError(f"U must be positive, got {self.U}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if self.M < 1 or self.N < 0:
            raise ValueError(f"need M >= 1 and N >= 0, got M={self.M}, N={self.N}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.site_origin not in ("center", "left"):
            raise ValueError(f"site_origin must be 'center' or 'left', got {self.site_origin!r}")
        if self.K is not None:
            if self.K < 1 or self.K % 2 == 0:
                raise ValueError(f"register size K must be odd and positive, got {self.K}")
            if self.K > self.M:
                raise ValueError(f"register size K={self.K} exceeds M={self.M}")

    @property
    def homogeneous(self) -> bool:
        return self.delta == 0

    @property
    def positions(self) -> np.ndarray:
        """Site coordinates measured from the trap minimum."""
        s = np.arange(self.M, dtype=float)
        if self.site_origin == "center":
            return s - (self.M - 1) / 2
        return s

    @property
    def trap_energies(self) -> np.ndarray:
        return self.delta * self.positions**2

    @property
    def register_sites(self) -> np.ndarray:
        """Indices of the ``K`` central sites ``|j| <= (K - 1)/2``."""
        if self.K is None:
            raise ValueError("register size K is not set")
        sites = np.nonzero(np.abs(self.positions) <= (self.K - 1) / 2 + 1e-12)[0]
        if len(sites) != self.K:
            raise ValueError(
                f"cannot centre a register of K={self.K} sites on M={self.M} sites "
                f"with site_origin={self.site_origin!r}"
            )
        return sites

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds; a periodic pair of sites carries two bonds."""
        pairs = [(s, s + 1) for s in range(self.M - 1)]
        if self.boundary == "periodic" and self.M > 1:
            pairs.append((self.M - 1, 0))
        return pairs


def build_hamiltonian(
    params: ModelParams,
    basis: Optional[FockBasis] = None,
    max_dimension: int = DEFAULT_MAX_DIMENSION,
) -> sparse.csr_matrix:
    """Assemble the real symmetric Bose-Hubbard matrix in CSR form.

    Off-diagonal entries are ``-J sqrt(n_j (n_i + 1))`` for every hop along a
    bond; the diagonal is ``sum_j eps(j) n_j + U/2 n_j (n_j - 1)``.
    """
    if params.d != 1:
        raise NotImplementedError("exact Hamiltonians are only supported for d = 1")
    if basis is None:
        basis = FockBasis(params.N, params.M)
    if (basis.N, basis.M) != (params.N, params.M):
        raise ValueError(f"basis (N={basis.N}, M={basis.M}) does not match parameters")
    if basis.size > max_dimension:
        raise DimensionError(
            f"dimension {basis.size} exceeds the budget of {max_dimension}; raise max_dimension"
        )

    occ = basis.states.astype(np.int64)
    diag = occ @ params.trap_energies + 0.5 * params.U * (occ * (occ - 1)).sum(axis=1)

    rows, cols, vals = [], [], []
    for a, b in params.bonds():
        for i, j in ((a, b), (b, a)):
            src = np.nonzero(occ[:, j] > 0)[0]
            moved = occ[src].copy()
            amp = np.sqrt(moved[:, j] * (moved[:, i] + 1.0))
            moved[:, i] += 1
            moved[:, j] -= 1
            rows.append(basis.index(moved))
            cols.append(src)
            vals.append(-params.J * amp)

    size = basis.size
    diag_idx = np.arange(size)
    H = sparse.coo_matrix(
        (
            np.concatenate(vals + [diag]),
            (np.concatenate(rows + [diag_idx]), np.concatenate(cols + [diag_idx])),
        ),
        shape=(size, size),
    )
    return H.tocsr()


def tunneling_from_depth(V: float, E_R: float = 1.0) -> float:
    """Tight-binding tunnelling energy for a lattice of depth ``V``."""
    if V <= 0:
        raise ValueError("lattice depth must be positive")
    s = V / E_R
    return 4.0 / math.sqrt(math.pi) * E_R * s**0.75 * math.exp(-2.0 * math.sqrt(s))


def _trap_threshold(params: ModelParams) -> float:
    d = params.d
    return params.delta * math.gamma(d / 2 + 1) * params.N ** (2 / d) / math.pi ** (d / 2)


def trap_constraint_ok(params: ModelParams) -> bool:
    """Whether ``U`` exceeds the trap energy of the outermost atoms."""
    return params.U > _trap_threshold(params)


def hole_percolation_probability(params: ModelParams, r_min: int, r_max: int) -> float:
    """Order-of-magnitude probability for edge holes to tunnel into the register.

    Product of first-order transition probabilities across the barrier shell
    from ``r_min`` to ``r_max``; evaluated in log space and allowed to
    underflow to zero.
    """
    if not r_max >= r_min >= 1:
        raise ValueError(f"need r_max >= r_min >= 1, got r_min={r_min}, r_max={r_max}")
    if params.delta <= 0:
        raise ValueError("hole percolation needs a trap (delta > 0)")
    d = params.d
    log_p = (
        2 * (gammaln(r_min + 1) - gammaln(r_max + 2))
        + math.log(d)
        + (d - 1) * math.log(r_max)
        + (d / 2) * math.log(math.pi)
        - gammaln(d / 2 + 1)
        + 2 * (r_max - r_min + 1) * math.log(params.J / (2 * params.delta))
    )
    return math.exp(log_p) if log_p > -745 else 0.0
