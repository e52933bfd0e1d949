"""Closed-form strong-coupling results for the unit-filled state.

All functions take times in units of 1/energy (hbar = 1) and broadcast over
array-valued ``t``.

Mode populations use the convention that survives comparison with
brute-force propagation: modes ``r = 1 .. floor(N/2)`` with wave number
``k_r = pi (2r - 1) / N`` and weight ``64 (J/E_r)^2 sin^2(k_r)``. Summed
over ``r`` and time averaged this gives ``8 (J/U)^2 N``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import j1


class PerturbativeValidityWarning(UserWarning):
    """Parameters are outside the regime where first-order results apply."""


@dataclass(frozen=True)
class ParticleHoleEigensystem:
    """Translation-invariant particle-hole modes of a unit-filled ring.

    ``coefficients[r-1, n-1]`` is the amplitude of mode ``r`` on the
    normalised symmetrised pair state at separation ``n``; rows are unit
    vectors. For even ``N`` the ``n = N/2`` pair state has half as many
    images as the others, so its coefficient carries an extra ``1/sqrt 2``
    relative to the per-configuration amplitude ``(2/sqrt N) sin(k_r n)``.
    """

    N: int
    J: float
    U: float
    coefficients: np.ndarray
    energies: np.ndarray

    @property
    def wave_numbers(self) -> np.ndarray:
        r = np.arange(1, len(self.energies) + 1)
        return np.pi * (2 * r - 1) / self.N

    @property
    def image_weights(self) -> np.ndarray:
        """Ratio of coefficient to per-configuration amplitude, per separation."""
        w = np.ones(self.N // 2)
        if self.N % 2 == 0:
            w[-1] = 1 / math.sqrt(2)
        return w

    @property
    def amplitudes(self) -> np.ndarray:
        """Per-configuration amplitudes ``s_n``, the unknowns of the recurrence."""
        return self.coefficients / self.image_weights

    def recurrence_residual(self) -> np.ndarray:
        """``-3J (s_{n+1} + s_{n-1}) - (E_r - U) s_n`` for every ``(r, n)``.

        Uses ``s_0 = 0`` and the ring closure ``s_{N-n} = s_n`` for the
        separation just past ``floor(N/2)``.
        """
        a = self.amplitudes
        p = a.shape[1]
        beyond = a[:, p - 1] if self.N % 2 else a[:, p - 2] if p > 1 else np.zeros(len(a))
        s = np.column_stack([np.zeros(len(a)), a, beyond])
        lhs = -3 * self.J * (s[:, 2:] + s[:, :-2])
        rhs = (self.energies - self.U)[:, None] * s[:, 1:-1]
        return lhs - rhs


def particle_hole_eigensystem(N: int, J: float, U: float) -> ParticleHoleEigensystem:
    if N < 2:
        raise ValueError("need at least two sites")
    p = N // 2
    r = np.arange(1, p + 1)
    k = np.pi * (2 * r - 1) / N
    n = np.arange(1, p + 1)
    # signed sines; an absolute value would break the recurrence for r >= 2
    coeffs = 2 / math.sqrt(N) * np.sin(np.outer(k, n))
    if N % 2 == 0:
        coeffs[:, -1] /= math.sqrt(2)
    energies = U - 6 * J * np.cos(k)
    return ParticleHoleEigensystem(N, J, U, coeffs, energies)


def recurrence_matrix(N: int, J: float, U: float) -> np.ndarray:
    """Symmetric ``floor(N/2)`` matrix of the pair recurrence on normalised pair states.

    Separations beyond ``N/2`` fold back, ``s_{N-n} = s_n``. For odd ``N``
    the last separation couples to itself; for even ``N`` the ``n = N/2``
    state has half the images, which turns its bond into ``-3 sqrt(2) J``.
    """
    p = N // 2
    A = U * np.eye(p)
    for n in range(p - 1):
        A[n, n + 1] = A[n + 1, n] = -3 * J
    if N % 2:
        A[p - 1, p - 1] += -3 * J
    elif p > 1:
        A[p - 1, p - 2] = A[p - 2, p - 1] = -3 * math.sqrt(2) * J
    return A


@dataclass(frozen=True)
class PerturbativeGroundState:
    alpha: float
    s1_coefficient: float
    energy2: float
    f: float
    g: float
    valid: bool


def perturbative_ground_state(N: int, d: int, J: float, U: float) -> PerturbativeGroundState:
    """First-order ground state ``alpha (|T> + 2 (J/U) sqrt(dN) |S_1>)``.

    Also returns the second-order energy and the normalisations of the
    double-pair and triple-occupancy states that enter at second order.
    """
    x = J / U
    dN = d * N
    # compare d*N against (U/J)^2 as d*N*(J/U)^2 against 1, which survives J = 0
    if dN * x**2 >= 1:
        raise ValueError(f"perturbation series diverges: d*N={dN} >= (U/J)^2={x**-2:g}")
    valid = dN * x**2 < 0.1
    if not valid:
        warnings.warn(f"d*N={dN} is not small against (U/J)^2", PerturbativeValidityWarning, stacklevel=2)
    radicand = 2 * dN * (dN - 3 - 4 * (d - 1))
    if radicand <= 0:
        raise ValueError(f"f(N,d) undefined: factor dN - 3 - 4(d - 1) = {dN - 3 - 4 * (d - 1)} is not positive")
    return PerturbativeGroundState(
        alpha=1 / math.sqrt(1 + 4 * dN * x**2),
        s1_coefficient=2 * x * math.sqrt(dN),
        energy2=-4 * dN * J**2 / U,
        f=radicand**-0.5,
        g=(6 * d * (2 * d - 1) * N) ** -0.5,
        valid=valid,
    )


def _bessel_ratio(t, J):
    """``J_1(6Jt) / (3Jt)`` with the removable point at ``t = 0``."""
    x = 3 * J * np.asarray(t, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    # J_1(2x)/x = 1 - x^2/2 + ... near zero
    return np.where(small, 1 - x**2 / 2, j1(2 * safe) / safe)


def fidelity_homogeneous(t, N: int, J: float, U: float):
    """Survival probability of the unit-filled ring prepared at ``t = 0``."""
    scale = 8 * (J / U) ** 2 * N
    if scale > 0.2:
        warnings.warn(f"8(J/U)^2 N = {scale:.3g}: outside strong coupling", PerturbativeValidityWarning, stacklevel=2)
    t = np.asarray(t, dtype=float)
    return 1 - scale * (1 - np.cos(U * t) * _bessel_ratio(t, J))


def fidelity_short_time(t, N: int, J: float, U: float):
    """Two-level (``|T>``, ``|S_1>``) Rabi form, valid for ``J t << 1``."""
    t = np.asarray(t, dtype=float)
    return 1 - 16 * (J / U) ** 2 * N * np.sin(U * t / 2) ** 2


def mode_population(r: int, t, N: int, J: float, U: float):
    """First-order population of particle-hole mode ``r``."""
    if not 1 <= r <= N // 2:
        raise ValueError(f"mode index r={r} outside 1..{N // 2}")
    k = math.pi * (2 * r - 1) / N
    E = U - 6 * J * math.cos(k)
    t = np.asarray(t, dtype=float)
    return 64 * (J / E) ** 2 * math.sin(k) ** 2 * np.sin(E * t / 2) ** 2


def dirichlet_ratio(t, N: int, delta: float):
    """``sin(delta (N-1) t) / sin(delta t)``, continuous through ``delta t = k pi``."""
    t = np.asarray(t, dtype=float)
    s = np.sin(delta * t)
    near = np.abs(s) < 1e-8
    safe = np.where(near, 1.0, s)
    limit = (N - 1) * np.cos(delta * (N - 1) * t) / np.cos(delta * t)
    return np.where(near, limit, np.sin(delta * (N - 1) * t) / safe)


def fidelity_commensurate_trap(t, N: int, J: float, U: float, delta: float):
    """Survival probability of the unit-filled state of a trapped ring."""
    if delta / U > 0.1:
        warnings.warn(f"delta/U = {delta / U:.3g} is not small", PerturbativeValidityWarning, stacklevel=2)
    t = np.asarray(t, dtype=float)
    return 1 - 8 * (J / U) ** 2 * (N - np.cos(U * t) * (1 + dirichlet_ratio(t, N, delta)))


def time_average(func, U: float, periods: int = 100, samples_per_period: int = 64) -> float:
    """Trapezoidal average of ``func(t)`` over ``periods`` cycles of ``2 pi / U``."""
    if periods < 1 or samples_per_period < 64:
        raise ValueError("need at least one period and 64 samples per period")
    t_end = periods * 2 * np.pi / U
    t = np.linspace(0.0, t_end, periods * samples_per_period + 1)
    return float(trapezoid(func(t), t) / t_end)


def fidelity_bounds(K: int, N: int, J: float, U: float, delta: float, periods: int = 100):
    """Time-averaged lower/upper bounds on the register fidelity for ``N >= K``."""
    if N < K:
        raise ValueError(f"bounds need N >= K, got N={N}, K={K}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PerturbativeValidityWarning)
        lower = time_average(lambda t: fidelity_commensurate_trap(t, N, J, U, delta), U, periods)
        upper = time_average(lambda t: fidelity_commensurate_trap(t, K, J, U, delta), U, periods)
    return lower, upper
