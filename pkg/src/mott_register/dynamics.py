"""
Unitary evolution under the Bose-Hubbard Hamiltonian.

Two independent propagation routes are provided: a Lanczos-Krylov
exponential for large sparse problems and dense eigendecomposition for small
ones. ``method="auto"`` picks dense up to ``DENSE_LIMIT`` states. The
restricted particle-hole propagation and the register projector also live
here, since every closed-form fidelity is checked against them.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal

from mott_register.fock import FockBasis, apply_hop
from mott_register.hamiltonian import ModelParams

DENSE_LIMIT = 2000


class KrylovError(RuntimeError):
    """The Krylov exponential could not reach the requested accuracy."""


# --------------------------------------------------------------------------
# states and projectors


def fock_state(basis: FockBasis, occupations) -> np.ndarray:
    psi = np.zeros(basis.size, dtype=complex)
    psi[basis.rank(occupations)] = 1.0
    return psi


def unit_filled_state(basis: FockBasis) -> np.ndarray:
    """The state with one atom on every site; needs ``N == M``."""
    if basis.N != basis.M:
        raise ValueError(f"unit filling needs N == M, got N={basis.N}, M={basis.M}")
    return fock_state(basis, (1,) * basis.M)


def _pair_vector(basis: FockBasis, pairs) -> np.ndarray:
    """Sum of ``a_i^dagger a_j |T>`` over the given ordered site pairs."""
    target = (1,) * basis.M
    vec = np.zeros(basis.size, dtype=complex)
    for i, j in pairs:
        new, amp = apply_hop(target, i, j)
        vec[basis.rank(new)] += amp
    return vec


def perturbative_ground_vector(params: ModelParams, basis: Optional[FockBasis] = None) -> np.ndarray:
    """First-order ground state ``alpha (|T> + c |S_1>)`` in the Fock basis.

    ``|S_1>`` is the normalised sum of nearest-neighbour particle-hole pairs
    and ``c = 2 (J/U) sqrt(number of bonds)``, which reduces to
    ``2 (J/U) sqrt(N)`` on a ring.
    """
    basis = basis or FockBasis(params.N, params.M)
    bonds = params.bonds()
    pairs = [p for a, b in bonds for p in ((a, b), (b, a))]
    s1 = _pair_vector(basis, pairs)
    s1 /= np.linalg.norm(s1)
    c = 2 * params.J / params.U * math.sqrt(len(bonds))
    return (unit_filled_state(basis) + c * s1) / math.sqrt(1 + c**2)


def particle_hole_states(basis: FockBasis) -> np.ndarray:
    """Normalised symmetrised pair states ``|S_n>``, ``n = 1 .. floor(N/2)``.

    Row ``n - 1`` collects every doubly occupied site at ring distance ``n``
    from its hole. For even ``N`` the ``n = N/2`` row has half as many
    images; normalising numerically absorbs that.
    """
    N = basis.M
    rows = []
    for n in range(1, N // 2 + 1):
        pairs = [(i, j) for i in range(N) for j in range(N) if i != j and min((i - j) % N, (j - i) % N) == n]
        vec = _pair_vector(basis, pairs)
        rows.append(vec / np.linalg.norm(vec))
    return np.array(rows)


class RegisterProjector:
    """Diagonal projector onto unit filling of the ``K`` central sites."""

    def __init__(self, params: ModelParams, basis: Optional[FockBasis] = None):
        self.basis = basis or FockBasis(params.N, params.M)
        if self.basis.M != params.M:
            raise ValueError("basis and parameters disagree on M")
        self.sites = params.register_sites
        self.mask = np.all(self.basis.states[:, self.sites] == 1, axis=1)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return np.where(self.mask, psi, 0)

    def __matmul__(self, psi):
        return self.apply(psi)


def register_fidelity(psi: np.ndarray, proj: RegisterProjector) -> float:
    """``<psi| P_R |psi>`` for a state in the projector's basis."""
    if psi.shape[-1] != proj.basis.size:
        raise ValueError("state and projector live in different bases")
    return float(np.sum(np.abs(psi[..., proj.mask]) ** 2, axis=-1))


# --------------------------------------------------------------------------
# propagation


def _lanczos(H, v: np.ndarray, m: int):
    beta0 = np.linalg.norm(v)
    V = np.zeros((m + 1, len(v)), dtype=complex)
    V[0] = v / beta0
    alpha = np.zeros(m)
    beta = np.zeros(m)
    for j in range(m):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        # full reorthogonalisation; m is small
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] <= 1e-13 * max(1.0, abs(alpha[j])):
            return V[: j + 1], alpha[: j + 1], beta[: j + 1], True
        V[j + 1] = w / beta[j]
    return V, alpha, beta, False


def krylov_step(H, v: np.ndarray, tau: float, m: int = 30, tol: float = 1e-12):
    """``exp(-i H tau) v`` by adaptive Lanczos substeps.

    The Krylov space is reused while shrinking the substep until the usual
    error estimate ``beta_m |[exp(-i tau T)]_{m,1}|`` falls below ``tol``
    times the norm of ``v``.
    """
    norm = np.linalg.norm(v)
    if norm == 0 or tau == 0:
        return v.copy()
    m = max(2, min(m, v.shape[0]))
    done = 0.0
    out = v.copy()
    while done < tau:
        V, alpha, beta, exact = _lanczos(H, out, m)
        k = len(alpha)
        if k == 1:
            evals, evecs = alpha, np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(alpha, beta[: k - 1])
        scale = np.linalg.norm(out)
        step = tau - done
        shrink = 0
        while True:
            y = evecs @ (np.exp(-1j * evals * step) * evecs[0].conj()) * scale
            err = 0.0 if exact else beta[k - 1] * abs(y[-1])
            if err <= tol * norm:
                break
            step *= 0.5
            shrink += 1
            if shrink > 60:
                raise KrylovError(
                    f"Krylov step did not converge at t={done:.6g} (residual {err:.3g}, substep {step:.3g})"
                )
        out = V[:k].T @ y
        done += step
    return out


def _check_grid(t_grid) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or t_grid[0] != 0:
        raise ValueError("time grid must be one-dimensional and start at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t_grid


def propagate(H, psi0, t_grid, method: str = "auto", krylov_dim: int = 30, tol: float = 1e-12) -> Iterator[np.ndarray]:
    """Yield ``exp(-i H t) psi0`` for each ``t`` in a grid starting at zero."""
    t_grid = _check_grid(t_grid)
    psi0 = np.asarray(psi0, dtype=complex)
    dim = psi0.shape[0]
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "krylov"
    if method == "dense":
        dense = H.toarray() if sparse.issparse(H) else np.asarray(H)
        evals, evecs = np.linalg.eigh(dense)
        coeffs = evecs.conj().T @ psi0
        for t in t_grid:
            yield evecs @ (np.exp(-1j * evals * t) * coeffs)
    elif method == "krylov":
        norm0 = np.linalg.norm(psi0)
        psi = psi0.copy()
        previous = 0.0
        for t in t_grid:
            psi = krylov_step(H, psi, t - previous, m=krylov_dim, tol=tol)
            previous = t
            if abs(np.linalg.norm(psi) - norm0) > 1e-9 * max(norm0, 1.0):
                raise KrylovError(f"norm drift at t={t:.6g}: {np.linalg.norm(psi):.12g} vs {norm0:.12g}")
            yield psi
    else:
        raise ValueError(f"unknown propagation method {method!r}")


def evolve(H, psi0, t_grid, method: str = "auto", **kw) -> np.ndarray:
    """States on the whole grid as an ``(len(t_grid), dim)`` array."""
    return np.array(list(propagate(H, psi0, t_grid, method=method, **kw)))


def overlap_trace(H, psi0, t_grid, target: np.ndarray, method: str = "auto", **kw) -> np.ndarray:
    """``|<target|psi(t)>|^2`` along the grid without storing the states."""
    target = np.asarray(target, dtype=complex)
    if method == "dense" or (method == "auto" and target.shape[0] <= DENSE_LIMIT):
        # project both vectors once; each time point is then O(dim)
        _check_grid(t_grid)
        dense = H.toarray() if sparse.issparse(H) else np.asarray(H)
        evals, evecs = np.linalg.eigh(dense)
        weights = (evecs.T @ target.conj()) * (evecs.conj().T @ np.asarray(psi0, dtype=complex))
        t = np.asarray(t_grid, dtype=float)
        return np.abs(np.exp(-1j * np.outer(t, evals)) @ weights) ** 2
    return np.array([abs(np.vdot(target, psi)) ** 2 for psi in propagate(H, psi0, t_grid, method=method, **kw)])


def register_fidelity_trace(H, psi0, t_grid, proj: RegisterProjector, method: str = "auto", **kw) -> np.ndarray:
    return np.array([register_fidelity(psi, proj) for psi in propagate(H, psi0, t_grid, method=method, **kw)])


# --------------------------------------------------------------------------
# restricted particle-hole propagation


def restricted_basis(params: ModelParams):
    """Unit-filled state plus all ``N(N-1)`` single particle-hole pairs.

    Returns the occupation tuples and the dense Hamiltonian obtained by
    keeping only the hops of the full Hamiltonian that stay inside this set,
    with the energy of ``|T>`` shifted to zero.
    """
    if params.N != params.M:
        raise ValueError("restricted propagation needs commensurate filling N == M")
    N = params.N
    target = (1,) * N
    states = [target]
    for i in range(N):
        for j in range(N):
            if i != j:
                states.append(apply_hop(target, i, j)[0])
    index = {s: k for k, s in enumerate(states)}
    eps = params.trap_energies
    e_target = float(np.dot(eps, target))
    H = np.zeros((len(states), len(states)))
    for k, s in enumerate(states):
        occ = np.array(s)
        H[k, k] = occ @ eps + 0.5 * params.U * np.sum(occ * (occ - 1)) - e_target
        for a, b in params.bonds():
            for i, j in ((a, b), (b, a)):
                hop = apply_hop(s, i, j)
                if hop is not None and hop[0] in index:
                    H[index[hop[0]], k] += -params.J * hop[1]
    return states, H


def evolve_restricted(params: ModelParams, t_grid) -> np.ndarray:
    """Survival probability of ``|T>`` inside the particle-hole subspace."""
    _, H = restricted_basis(params)
    evals, evecs = np.linalg.eigh(H)
    weights = np.abs(evecs[0]) ** 2
    t = np.asarray(t_grid, dtype=float)
    amp = np.exp(-1j * np.outer(t, evals)) @ weights
    return np.abs(amp) ** 2


def energy_expectation(H, psi: np.ndarray) -> float:
    return float(np.vdot(psi, H @ psi).real / np.vdot(psi, psi).real)
