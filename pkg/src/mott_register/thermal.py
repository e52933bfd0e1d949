"""
Finite-temperature register fidelity from a canonical ensemble of
Bose-Hubbard eigenstates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

DENSE_BUDGET = 4000


class ConvergenceError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


class TruncationError(ValueError):
    """The Boltzmann tail beyond a truncated spectrum is too heavy."""

    def __init__(self, message, required_window=None):
        super().__init__(message)
        self.required_window = required_window


@dataclass(frozen=True)
class SpectrumTable:
    """Ascending eigenvalues with per-eigenstate register overlap.

    ``completeness`` is the fraction of the Hilbert space covered.
    """

    eigenvalues: np.ndarray
    overlaps: np.ndarray
    dimension: int
    residuals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.eigenvalues) != len(self.overlaps):
            raise ValueError("one overlap per eigenvalue required")
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be ascending")

    @property
    def completeness(self) -> float:
        return len(self.eigenvalues) / self.dimension

    @property
    def complete(self) -> bool:
        return len(self.eigenvalues) == self.dimension

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    def shifted(self, offset: float) -> "SpectrumTable":
        return SpectrumTable(self.eigenvalues + offset, self.overlaps, self.dimension, self.residuals)


def _mask(projector, dim):
    if projector is None:
        return None
    mask = getattr(projector, "mask", projector)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (dim,):
        raise ValueError(f"projector mask has shape {mask.shape}, expected ({dim},)")
    return mask


def _norm_estimate(H) -> float:
    # max absolute row sum bounds the spectral norm of a symmetric matrix
    A = abs(H) if sparse.issparse(H) else np.abs(H)
    return float(np.asarray(A.sum(axis=1)).max()) or 1.0


def _residuals(H, w, V):
    return np.linalg.norm(H @ V - V * w, axis=0)


def diagonalize(
    H,
    mode: str = "full",
    k: int = 10,
    window: float | None = None,
    projector=None,
    dense_budget: int = DENSE_BUDGET,
    tol: float = 1e-8,
) -> SpectrumTable:
    """Eigenvalues and register overlaps of a real symmetric Hamiltonian.

    Parameters
    ----------
    mode : {"full", "lowest", "window"}
        ``full`` uses dense LAPACK and needs ``dim <= dense_budget``.
        ``lowest`` returns the ``k`` lowest pairs from ARPACK.
        ``window`` grows ``k`` until all states with ``E - E0 <= window`` are found.
    projector : RegisterProjector or boolean mask, optional
        Basis states counted as success. Without it overlaps are zero.
    tol : float
        Residual bound relative to ``||H||`` for each returned pair.
    """
    dim = H.shape[0]
    mask = _mask(projector, dim)
    hnorm = _norm_estimate(H)

    if mode == "full":
        if dim > dense_budget:
            raise ValueError(f"dimension {dim} exceeds the dense budget {dense_budget}; use mode='lowest' or 'window'")
        A = H.toarray() if sparse.issparse(H) else np.asarray(H)
        w, V = eigh(A)
    elif mode in ("lowest", "window"):
        if mode == "window" and (window is None or window <= 0):
            raise ValueError("window mode needs a positive energy window")
        if dim <= max(k + 2, 64):
            A = H.toarray() if sparse.issparse(H) else np.asarray(H)
            w, V = eigh(A)
            if mode == "lowest":
                w, V = w[:k], V[:, :k]
        else:
            w, V = _lanczos_lowest(H, k, tol, hnorm)
            while mode == "window" and w[-1] - w[0] <= window and len(w) < dim - 2:
                k = min(2 * len(w), dim - 2)
                w, V = _lanczos_lowest(H, k, tol, hnorm)
        if mode == "window":
            keep = w - w[0] <= window
            # keep one state past the edge so the tail bound sees the true gap
            n = min(int(keep.sum()) + 1, len(w))
            w, V = w[:n], V[:, :n]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    res = _residuals(H, w, V)
    if res.max(initial=0.0) > tol * hnorm:
        raise ConvergenceError(f"eigenpair residual {res.max():.3g} exceeds {tol * hnorm:.3g}", list(res))
    overlaps = np.zeros(len(w)) if mask is None else np.clip((V[mask] ** 2).sum(axis=0), 0.0, 1.0)
    return SpectrumTable(np.asarray(w), overlaps, dim, res)


def _lanczos_lowest(H, k, tol, hnorm):
    history = []
    for attempt in range(3):
        try:
            w, V = eigsh(H, k=k, which="SA", tol=tol * 1e-2, maxiter=dim_iter(H, attempt))
        except ArpackNoConvergence as exc:
            history.append(f"attempt {attempt}: {len(exc.eigenvalues)} of {k} converged")
            continue
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        res = _residuals(H, w, V)
        history.append(res.max())
        if res.max() <= tol * hnorm:
            return w, V
    raise ConvergenceError(f"Lanczos did not reach residual {tol:g}·||H|| for k={k}", history)


def dim_iter(H, attempt):
    return 20 * H.shape[0] * (attempt + 1)


def _ground_average(spectrum: SpectrumTable, tol: float = 1e-10) -> float:
    E = spectrum.eigenvalues
    degenerate = E - E[0] <= tol * max(1.0, abs(E[0]))
    return float(spectrum.overlaps[degenerate].mean())


def thermal_fidelity(spectrum: SpectrumTable, T, tail_budget: float = 1e-6):
    """Canonical average of the register overlap at temperature(s) ``T``.

    Energies are measured from the ground state. For a truncated spectrum the
    weight of the missing states is bounded by placing all of them at the
    window edge; if that exceeds ``tail_budget`` of ``Z`` a
    :class:`TruncationError` reports the window needed.
    """
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(T_arr < 0):
        raise ValueError("temperature must be non-negative")
    E = spectrum.eigenvalues - spectrum.eigenvalues[0]
    missing = spectrum.dimension - len(E)
    out = np.empty(len(T_arr))
    for i, temp in enumerate(T_arr):
        if temp == 0:
            out[i] = _ground_average(spectrum)
            continue
        w = np.exp(-E / temp)
        Z = w.sum()
        if missing:
            tail = missing * math.exp(-E[-1] / temp) / Z
            if tail > tail_budget:
                need = temp * math.log(missing / (tail_budget * Z))
                raise TruncationError(
                    f"truncated spectrum covers E - E0 <= {E[-1]:.6g}; T={temp:g} needs a window of at least {need:.6g}",
                    need,
                )
        out[i] = (w @ spectrum.overlaps) / Z
    return out if np.ndim(T) else float(out[0])


class CharacteristicTemperatures(tuple):
    """``(T_d, T_h, T_max)``."""

    def __new__(cls, T_d, T_h):
        return super().__new__(cls, (T_d, T_h, min(T_d, T_h)))

    T_d = property(lambda self: self[0])
    T_h = property(lambda self: self[1])
    T_max = property(lambda self: self[2])


def characteristic_temperatures(U: float, delta: float, N: int, K: int) -> CharacteristicTemperatures:
    """Temperatures at which doublons and register holes become populated.

    ``T_d = U - delta ((N - 1)/2)^2`` is the cost of moving an edge atom onto
    a central site, and ``T_h = delta ((N + 1)/2)^2 - delta ((K - 1)/2)^2`` is
    the cost of moving an atom from the register edge to just outside the
    filled region (``k_B = 1``).
    """
    if K > N:
        raise ValueError("register cannot exceed the atom number")
    T_d = U - delta * ((N - 1) / 2) ** 2
    T_h = delta * ((N + 1) / 2) ** 2 - delta * ((K - 1) / 2) ** 2
    return CharacteristicTemperatures(T_d, T_h)


def temperature_grid(T_h: float, n: int = 48, T_min: float = 0.1) -> np.ndarray:
    """Logarithmic grid from ``T_min`` to ``2 T_h``."""
    if n < 2 or T_h <= T_min / 2:
        raise ValueError("need n >= 2 and 2 T_h > T_min")
    return np.geomspace(T_min, 2 * T_h, n)
