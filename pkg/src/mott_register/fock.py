"""
Fixed particle-number bosonic Fock space.

States of ``N`` bosons on ``M`` sites are occupation vectors ordered
lexicographically with the first site varying slowest and larger occupations
first, so ``(N, 0, ..., 0)`` has index 0 and ``(0, ..., 0, N)`` is last.
Ranking uses the cumulative binomial identity

    rank(n) = sum_k C(R_k - n_k - 1 + m_k, m_k),   m_k = M - k - 1,

where ``R_k`` is the number of particles not yet placed before site ``k``
(terms with ``R_k == n_k`` vanish). No hash tables are involved.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_INDEX_MAX = np.iinfo(np.int64).max


def dimension(N: int, M: int) -> int:
    """Number of ways to distribute ``N`` bosons over ``M`` sites.

    Raises
    ------
    OverflowError
        If the result does not fit in a signed 64-bit index.
    """
    N, M = int(N), int(M)
    if N < 0 or M < 1:
        raise ValueError(f"need N >= 0 and M >= 1, got N={N}, M={M}")
    size = math.comb(N + M - 1, N)
    if size > _INDEX_MAX:
        raise OverflowError(f"dimension C({N + M - 1}, {N}) exceeds int64 indexing")
    return size


def _occupation_dtype(N: int):
    return np.uint8 if N <= np.iinfo(np.uint8).max else np.uint16


@lru_cache(maxsize=64)
def _enumerate(N: int, M: int) -> np.ndarray:
    if M == 1:
        return np.array([[N]], dtype=np.int64)
    blocks = []
    for first in range(N, -1, -1):
        tail = _enumerate(N - first, M - 1)
        head = np.full((len(tail), 1), first, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


class FockBasis:
    """Immutable ordered basis of ``N`` bosons on ``M`` sites.

    ``states`` is an ``(size, M)`` array of occupations (small unsigned ints).
    Vectorised ranking is available through :meth:`index`.
    """

    def __init__(self, N: int, M: int):
        self.N = int(N)
        self.M = int(M)
        self.size = dimension(self.N, self.M)
        # _binom[x, m] = C(x + m, m): states ranked ahead of a site value.
        xs = np.arange(self.N + 1)[:, None]
        ms = np.arange(self.M)[None, :]
        table = np.vectorize(lambda x, m: math.comb(int(x + m), int(m)))(xs, ms)
        self._binom = table.astype(np.int64)
        self._states = None

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"FockBasis(N={self.N}, M={self.M}, size={self.size})"

    @property
    def states(self) -> np.ndarray:
        if self._states is None:
            states = _enumerate(self.N, self.M).astype(_occupation_dtype(self.N))
            states.setflags(write=False)
            self._states = states
        return self._states

    def _check(self, occupations: np.ndarray) -> None:
        if occupations.shape[-1] != self.M:
            raise ValueError(f"expected {self.M} sites, got {occupations.shape[-1]}")
        if np.any(occupations < 0):
            raise ValueError("occupations must be non-negative")
        if np.any(occupations.sum(axis=-1) != self.N):
            raise ValueError(f"occupations must sum to N={self.N}")

    def index(self, occupations) -> np.ndarray:
        """Vectorised rank of an ``(..., M)`` array of occupation vectors."""
        occ = np.asarray(occupations, dtype=np.int64)
        self._check(occ)
        flat = occ.reshape(-1, self.M)
        placed = np.cumsum(flat, axis=1) - flat
        remaining = self.N - placed
        out = np.zeros(len(flat), dtype=np.int64)
        for k in range(self.M - 1):
            gap = remaining[:, k] - flat[:, k] - 1
            hit = gap >= 0
            out[hit] += self._binom[gap[hit], self.M - k - 1]
        return out.reshape(occ.shape[:-1])

    def rank(self, state) -> int:
        """Index of a single occupation vector."""
        return int(self.index(np.asarray(state))[()])

    def unrank(self, i: int) -> tuple[int, ...]:
        """Occupation vector at index ``i``."""
        i = int(i)
        if not 0 <= i < self.size:
            raise IndexError(f"index {i} out of range for basis of size {self.size}")
        occ = []
        remaining = self.N
        for k in range(self.M - 1):
            tail_sites = self.M - k - 1
            value = remaining
            while True:
                # states sharing this prefix value
                block = self._binom[remaining - value, tail_sites - 1]
                if i < block:
                    break
                i -= block
                value -= 1
            occ.append(value)
            remaining -= value
        occ.append(remaining)
        return tuple(occ)


def apply_hop(state, i: int, j: int):
    """Apply ``a_i^dagger a_j`` to a Fock state.

    Returns ``None`` when site ``j`` is empty, otherwise the new occupation
    tuple and the bosonic amplitude ``sqrt(n_j) * sqrt(n_i + 1)``.
    """
    occ = list(state)
    if i == j:
        raise ValueError("hop requires distinct sites")
    if not (0 <= i < len(occ) and 0 <= j < len(occ)):
        raise IndexError(f"sites ({i}, {j}) outside lattice of {len(occ)} sites")
    if occ[j] == 0:
        return None
    amplitude = math.sqrt(occ[j]) * math.sqrt(occ[i] + 1)
    occ[j] -= 1
    occ[i] += 1
    return tuple(occ), amplitude
