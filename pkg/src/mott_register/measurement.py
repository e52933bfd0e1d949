"""
Continuous measurement of a register of ``K`` sites.

Inside the register the dynamics is reduced to the unit-filled target ``|T>``
coupled by ``-sqrt(2) J`` to ``2K`` faulty particle-hole channels. A field
resonant with the faulty states scatters photons; after adiabatic elimination
of the excited level this damps the faulty-target coherences at
``kappa = Omega^2 gamma / (8 (U^2 + gamma^2 / 4))`` and removes faulty
population at ``2 kappa``.

Channels close the register periodically: the ``K - 1`` internal bonds carry
energies ``U -+ delta (2j - 1)`` (``j`` labels the bond between sites
``j - 1`` and ``j``), and one closing bond carries energy ``U`` in both
orientations. With ``kappa = 0`` this reproduces the commensurate trapped
ring with ``N -> K``.

State layout for the linear generator is the real vector
``[rho_TT, rho_SS (2K), Re rho_ST (2K), Im rho_ST (2K)]``.

Finite detector efficiency ``eta``: a fraction ``eta`` of scattering events
is observed. Unobserved events still collapse the register into the faulty
channel (or back into ``|T>`` with ``reentry="target"``) but the observer
does not learn about them. The reported fidelity is the target population
averaged over records with no observed event, which is what the
deterministic filter ``evolve_conditional(..., efficiency=eta)`` computes.
This efficiency model is an assumption and is isolated in :class:`JumpModel`.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import brentq

from mott_register.analytics import fidelity_commensurate_trap


class IntegrationError(RuntimeError):
    """The ODE solver failed; carries the failure time and last state."""

    def __init__(self, message, time=None, state=None):
        super().__init__(message)
        self.time = time
        self.state = state


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MeasurementParams:
    Omega: float
    gamma: float
    U: float
    J: float
    K: int
    delta: float = 0.0
    eta: float = 1.0
    Vc: float = 0.0
    reentry: str = "faulty"

    def __post_init__(self):
        if self.K < 1 or self.K % 2 == 0:
            raise ValueError(f"register size K must be odd, got {self.K}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"detector efficiency must lie in [0, 1], got {self.eta}")
        if self.gamma <= 0 or self.Omega < 0:
            raise ValueError("need gamma > 0 and Omega >= 0")
        if self.U <= 0 or self.J < 0:
            raise ValueError("need U > 0 and J >= 0")
        if self.reentry not in ("faulty", "target"):
            raise ValueError(f"reentry must be 'faulty' or 'target', got {self.reentry!r}")

    @property
    def kappa(self) -> float:
        return kappa(self)

    @property
    def channels(self) -> int:
        return 2 * self.K


def kappa(params: MeasurementParams) -> float:
    """Measurement-induced dephasing rate of faulty-target coherences."""
    return params.Omega**2 * params.gamma / (8 * (params.U**2 + (params.gamma / 2) ** 2))


def channel_labels(K: int) -> list[tuple]:
    """``(j, sign)`` per channel; the closing bond is labelled ``("wrap", sign)``."""
    bonds = range(-(K - 3) // 2, (K - 1) // 2 + 1)
    labels = [(j, s) for j in bonds for s in ("+", "-")]
    return labels + [("wrap", "+"), ("wrap", "-")]


def channel_energies(params) -> np.ndarray:
    """Energies ``U (1 -+ (delta/U)(2j - 1))`` of the ``2K`` faulty channels."""
    energies = []
    for j, sign in channel_labels(params.K):
        if j == "wrap":
            energies.append(params.U)
        else:
            shift = params.delta * (2 * j - 1)
            energies.append(params.U - shift if sign == "+" else params.U + shift)
    return np.array(energies)


class RegimeDiagnostic(NamedTuple):
    weak_drive: bool
    strong_damping: bool
    drive_ratio: float
    damping_ratio: float

    @property
    def ok(self) -> bool:
        return self.weak_drive and self.strong_damping


def good_regime_check(params: MeasurementParams, eps1: float = 0.1) -> RegimeDiagnostic:
    """Check ``Omega/gamma < eps1`` and ``kappa / (2 sqrt(K) J) > 1``."""
    drive = params.Omega / params.gamma
    if params.J == 0:
        damping = math.inf if params.kappa > 0 else 0.0
    else:
        damping = params.kappa / (2 * math.sqrt(params.K) * params.J)
    return RegimeDiagnostic(drive < eps1, damping > 1, drive, damping)


def scan_good_regime(base: MeasurementParams, omegas, gammas, eps1: float = 0.1):
    """All ``(Omega, gamma, kappa)`` on a grid that satisfy both regime conditions."""
    hits = []
    for g in gammas:
        for om in omegas:
            p = MeasurementParams(**{**base.__dict__, "Omega": float(om), "gamma": float(g)})
            if good_regime_check(p, eps1).ok:
                hits.append((float(om), float(g), p.kappa))
    return hits


@dataclass
class GroundManifoldState:
    """Register density-matrix fragment: target, faulty channels, coherences."""

    rho_TT: float
    rho_SS: np.ndarray
    rho_ST: np.ndarray

    def __post_init__(self):
        self.rho_SS = np.asarray(self.rho_SS, dtype=float)
        self.rho_ST = np.asarray(self.rho_ST, dtype=complex)
        if self.rho_SS.shape != self.rho_ST.shape:
            raise ValueError("rho_SS and rho_ST must have one entry per channel")

    @property
    def trace(self) -> float:
        return float(self.rho_TT + self.rho_SS.sum())

    @property
    def fidelity(self) -> float:
        return float(self.rho_TT / self.trace)

    def check(self, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` if positivity or Cauchy-Schwarz is violated."""
        if self.rho_TT < -1e-12 or np.any(self.rho_SS < -1e-12):
            raise ValueError("negative population")
        excess = np.abs(self.rho_ST) ** 2 - self.rho_TT * self.rho_SS
        if np.any(excess > tol):
            raise ValueError(f"coherence exceeds Cauchy-Schwarz bound by {excess.max():.3g}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.rho_TT], self.rho_SS, self.rho_ST.real, self.rho_ST.imag])

    @classmethod
    def from_vector(cls, x) -> "GroundManifoldState":
        C = (len(x) - 1) // 3
        return cls(float(x[0]), x[1 : 1 + C].copy(), x[1 + C : 1 + 2 * C] + 1j * x[1 + 2 * C :])

    @classmethod
    def target(cls, K: int) -> "GroundManifoldState":
        return cls(1.0, np.zeros(2 * K), np.zeros(2 * K))

    @classmethod
    def faulty(cls, K: int, channel: int) -> "GroundManifoldState":
        ss = np.zeros(2 * K)
        ss[channel] = 1.0
        return cls(0.0, ss, np.zeros(2 * K))

    @classmethod
    def from_ground_state(cls, K: int, J: float, U: float, coherent: bool = False) -> "GroundManifoldState":
        """Populations of the first-order Bose-Hubbard ground state.

        ``rho_TT = alpha^2`` and each channel holds ``2 alpha^2 (J/U)^2``, with
        ``alpha^2 = 1 / (1 + 4 K (J/U)^2)``. With ``coherent=True`` the pure-state
        coherences ``alpha^2 sqrt(2) J/U`` are kept; otherwise they are dropped.
        """
        x = J / U
        a2 = 1 / (1 + 4 * K * x**2)
        ss = np.full(2 * K, 2 * a2 * x**2)
        st = np.full(2 * K, a2 * math.sqrt(2) * x if coherent else 0.0)
        return cls(a2, ss, st)


def generator(params: MeasurementParams, efficiency: float = 1.0) -> sparse.csr_matrix:
    """Real linear generator of the ground-manifold equations.

    ``efficiency = 1`` gives the null-result (trace-decreasing) equations.
    Smaller values re-inject the unobserved fraction ``1 - efficiency`` of
    scattering events according to ``params.reentry``; ``efficiency = 0``
    is the non-selective master equation.
    """
    C = params.channels
    E = channel_energies(params) + params.Vc
    g = math.sqrt(2) * params.J
    k = params.kappa
    tt, ss = 0, 1 + np.arange(C)
    re, im = ss + C, ss + 2 * C
    L = sparse.lil_matrix((1 + 3 * C, 1 + 3 * C))
    for c in range(C):
        L[re[c], re[c]] = -k
        L[re[c], im[c]] = E[c]
        L[im[c], re[c]] = -E[c]
        L[im[c], im[c]] = -k
        L[im[c], tt] = g
        L[im[c], ss[c]] = -g
        L[tt, im[c]] = -2 * g
        L[ss[c], im[c]] = 2 * g
        L[ss[c], ss[c]] = -2 * k
        recycled = (1 - efficiency) * 2 * k
        if recycled:
            if params.reentry == "faulty":
                L[ss[c], ss[c]] += recycled
            else:
                L[tt, ss[c]] += recycled
    return L.tocsr()


@dataclass
class ManifoldTrajectory:
    times: np.ndarray
    rho_TT: np.ndarray
    rho_SS: np.ndarray
    rho_ST: np.ndarray

    @property
    def trace(self) -> np.ndarray:
        return self.rho_TT + self.rho_SS.sum(axis=1)

    @property
    def fidelity(self) -> np.ndarray:
        """Normalised target population ``rho_TT / trace``."""
        return self.rho_TT / self.trace

    def state(self, i: int) -> GroundManifoldState:
        return GroundManifoldState(float(self.rho_TT[i]), self.rho_SS[i].copy(), self.rho_ST[i].copy())

    @classmethod
    def from_vectors(cls, times, X) -> "ManifoldTrajectory":
        C = (X.shape[1] - 1) // 3
        return cls(
            np.asarray(times, dtype=float),
            X[:, 0].copy(),
            X[:, 1 : 1 + C].copy(),
            X[:, 1 + C : 1 + 2 * C] + 1j * X[:, 1 + 2 * C :],
        )


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    return t


class _Propagator:
    """``exp(L s)`` for a fixed generator, via eigendecomposition when well
    conditioned and ``scipy.linalg.expm`` otherwise."""

    def __init__(self, L):
        self.L = L.toarray() if sparse.issparse(L) else np.asarray(L)
        self._cache: dict[float, np.ndarray] = {}
        lam, W = np.linalg.eig(self.L)
        self.modal = False
        if np.linalg.cond(W) < 1e8:
            Winv = np.linalg.inv(W)
            if np.abs(W @ np.diag(lam) @ Winv - self.L).max() <= 1e-9 * max(1.0, np.abs(self.L).max()):
                self.lam, self.W, self.Winv, self.modal = lam, W, Winv, True

    def matrix(self, s: float) -> np.ndarray:
        key = float(s)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = expm(self.L * s)
        return self._cache[key]

    def apply(self, s: float, x: np.ndarray) -> np.ndarray:
        if self.modal:
            return (self.W @ (np.exp(self.lam * s) * (self.Winv @ x))).real
        return self.matrix(s) @ x


def evolve_conditional(
    params: MeasurementParams,
    rho0: GroundManifoldState,
    t_grid,
    efficiency: float = 1.0,
    method: str = "expm",
    rtol: float = 1e-8,
    atol: float = 1e-14,
) -> ManifoldTrajectory:
    """Integrate the ground-manifold equations without renormalisation.

    ``method="expm"`` propagates exactly with the matrix exponential of the
    (time-independent) generator; any other value is passed to
    ``scipy.integrate.solve_ivp`` (e.g. ``"DOP853"`` or ``"Radau"``).
    """
    t = _check_grid(t_grid)
    if len(rho0.rho_SS) != params.channels:
        raise ValueError(f"initial state has {len(rho0.rho_SS)} channels, expected {params.channels}")
    diag = good_regime_check(params)
    if not diag.ok and params.kappa > 0:
        warnings.warn(f"outside the good measurement regime: {diag}", RegimeWarning, stacklevel=2)
    L = generator(params, efficiency)
    x0 = rho0.to_vector()
    if method == "expm":
        prop = _Propagator(L)
        X = np.empty((len(t), len(x0)))
        X[0] = x0
        for i in range(1, len(t)):
            X[i] = prop.matrix(t[i] - t[i - 1]) @ X[i - 1]
    else:
        sol = solve_ivp(lambda _, x: L @ x, (t[0], t[-1]), x0, t_eval=t, method=method, rtol=rtol, atol=atol)
        if not sol.success:
            last = sol.y[:, -1] if sol.y.size else x0
            t_fail = sol.t[-1] if sol.t.size else t[0]
            raise IntegrationError(f"integration failed at t={t_fail:.6g}: {sol.message}", t_fail, last)
        X = sol.y.T
    return ManifoldTrajectory.from_vectors(t, X)


def evolve_nonselective(params: MeasurementParams, rho0: GroundManifoldState, t_grid, **kw) -> ManifoldTrajectory:
    """Trace-preserving evolution averaged over all measurement records."""
    return evolve_conditional(params, rho0, t_grid, efficiency=0.0, **kw)


def saturation_time(times, fidelity) -> float:
    """First time the fidelity gap ``1 - F`` falls to ``1/e`` of its initial value."""
    times = np.asarray(times)
    gap = 1 - np.asarray(fidelity)
    hit = np.nonzero(gap <= gap[0] / math.e)[0]
    if len(hit) == 0 or gap[0] <= 0:
        return math.nan
    i = hit[0]
    if i == 0:
        return float(times[0])
    # linear interpolation inside the crossing interval
    g0, g1 = gap[i - 1], gap[i]
    target = gap[0] / math.e
    return float(times[i - 1] + (g0 - target) / (g0 - g1) * (times[i] - times[i - 1]))


def post_measurement_free_evolution(params: MeasurementParams, t_grid) -> np.ndarray:
    """Fidelity after the field is switched off on a unit-filled register."""
    return fidelity_commensurate_trap(np.asarray(t_grid, dtype=float), params.K, params.J, params.U, params.delta)


# --------------------------------------------------------------------------
# quantum trajectories


@dataclass(frozen=True)
class JumpRecord:
    time: float
    channel: int
    observed: bool


@dataclass(frozen=True)
class JumpModel:
    """Detector efficiency and where the register lands after a scattering event."""

    efficiency: float = 1.0
    reentry: str = "faulty"

    def observed(self, rng: np.random.Generator) -> bool:
        return bool(rng.random() < self.efficiency)

    def after_jump(self, channels: int, channel: int) -> np.ndarray:
        K = channels // 2
        state = GroundManifoldState.faulty(K, channel) if self.reentry == "faulty" else GroundManifoldState.target(K)
        return state.to_vector()


@dataclass
class TrajectoryEnsemble:
    """Per-trajectory target population and detection record on a time grid.

    ``fidelity[i, k]`` is trajectory ``i``'s normalised target population at
    ``times[k]``; ``detected[i, k]`` says whether an observed event happened
    at or before that time.
    """

    times: np.ndarray
    fidelity: np.ndarray
    detected: np.ndarray
    jumps: list = field(default_factory=list)

    @property
    def n_traj(self) -> int:
        return self.fidelity.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.fidelity.mean(axis=0)

    @property
    def sem(self) -> np.ndarray:
        n = self.n_traj
        return self.fidelity.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(self.times))

    @property
    def null_count(self) -> np.ndarray:
        return (~self.detected).sum(axis=0)

    @property
    def null_mean(self) -> np.ndarray:
        """Reported fidelity: average over records with no observed event."""
        keep = ~self.detected
        n = keep.sum(axis=0)
        total = np.where(keep, self.fidelity, 0.0).sum(axis=0)
        return np.divide(total, n, out=np.full(len(self.times), np.nan), where=n > 0)

    @property
    def null_sem(self) -> np.ndarray:
        keep = ~self.detected
        n = keep.sum(axis=0)
        mu = self.null_mean
        sq = np.where(keep, (self.fidelity - mu) ** 2, 0.0).sum(axis=0)
        var = np.divide(sq, n - 1, out=np.zeros(len(self.times)), where=n > 1)
        return np.sqrt(var / np.maximum(n, 1))


def _trace(x):
    return x[0] + x[1 : 1 + (len(x) - 1) // 3].sum()


def _run_batch(prop, jump_model, C, kappa_, x0, t, rngs):
    B = len(rngs)
    X = np.repeat(x0[:, None], B, axis=1)
    thresholds = np.array([rng.random() for rng in rngs])
    fid = np.empty((B, len(t)))
    detected = np.zeros((B, len(t)), dtype=bool)
    seen = np.zeros(B, dtype=bool)
    jumps = [[] for _ in range(B)]
    ones = np.concatenate([[1.0], np.ones(C), np.zeros(2 * C)])

    fid[:, 0] = X[0] / (ones @ X)
    for k in range(1, len(t)):
        dt = t[k] - t[k - 1]
        Xn = prop.matrix(dt) @ X
        for b in np.nonzero(ones @ Xn < thresholds)[0]:
            x = X[:, b]
            elapsed = 0.0
            while True:
                rest = dt - elapsed
                end = prop.apply(rest, x)
                if _trace(end) >= thresholds[b]:
                    x = end
                    break
                tau = brentq(lambda s: _trace(prop.apply(s, x)) - thresholds[b], 0.0, rest, xtol=1e-15, rtol=1e-13)
                xj = prop.apply(tau, x)
                rates = np.clip(2 * kappa_ * xj[1 : 1 + C], 0, None)
                rng = rngs[b]
                channel = int(rng.choice(C, p=rates / rates.sum()))
                obs = jump_model.observed(rng)
                elapsed += tau
                jumps[b].append(JumpRecord(float(t[k - 1] + elapsed), channel, obs))
                seen[b] |= obs
                x = jump_model.after_jump(C, channel)
                thresholds[b] = rng.random()
            Xn[:, b] = x
        X = Xn
        fid[:, k] = X[0] / (ones @ X)
        detected[:, k] = seen
    return fid, detected, jumps


def simulate_trajectories(
    params: MeasurementParams,
    rho0: GroundManifoldState,
    t_grid,
    n_traj: int,
    seed,
    workers: int = 1,
    jump_model: Optional[JumpModel] = None,
    batch_size: int = 64,
) -> TrajectoryEnsemble:
    """Monte Carlo unravelling of the measured register.

    Between events each trajectory follows the null-result equations; events
    fire when the trace drops below a uniform random threshold. Trajectory
    ``i`` draws from its own stream spawned from ``seed``, and batches are
    fixed-size, so results do not depend on ``workers``.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    t = _check_grid(t_grid)
    jump_model = jump_model or JumpModel(params.eta, params.reentry)
    C = params.channels
    prop = _Propagator(generator(params, 1.0))
    x0 = rho0.to_vector() / rho0.trace
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_traj)]
    batches = [streams[i : i + batch_size] for i in range(0, n_traj, batch_size)]

    def work(rngs):
        return _run_batch(prop, jump_model, C, params.kappa, x0, t, rngs)

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, batches))
    else:
        results = [work(b) for b in batches]
    fid = np.vstack([r[0] for r in results])
    detected = np.vstack([r[1] for r in results])
    jumps = [j for r in results for j in r[2]]
    return TrajectoryEnsemble(t, fid, detected, jumps)


# --------------------------------------------------------------------------
# validation with explicit excited levels


def full_register_liouvillian(params: MeasurementParams) -> tuple[np.ndarray, int]:
    """Generator of the non-trace-preserving master equation with excited levels.

    Basis order: ``|T>``, the ``2K`` faulty channels, then their ``2K``
    excited partners. Acts on row-major flattened density matrices.
    """
    C = params.channels
    n = 1 + 2 * C
    E = channel_energies(params)
    H = np.zeros((n, n), dtype=complex)
    for c in range(C):
        s, m = 1 + c, 1 + C + c
        H[s, s] = params.Vc + E[c]
        H[m, m] = params.Vc + E[c] - params.U
        H[s, 0] = H[0, s] = -math.sqrt(2) * params.J
        H[m, s] = H[s, m] = params.Omega / 2
    Heff = H - 0.5j * params.gamma * np.diag(np.r_[np.zeros(1 + C), np.ones(C)])
    eye = np.eye(n)
    # d rho = -i (Heff rho - rho Heff^dagger)
    L = -1j * (np.kron(Heff, eye) - np.kron(eye, Heff.conj()))
    return L, n


def evolve_full_register(params: MeasurementParams, rho0: GroundManifoldState, t_grid) -> np.ndarray:
    """Normalised target population with the excited levels kept explicitly.

    Dense validation route, intended for ``K <= 5``.
    """
    if params.K > 5:
        raise ValueError("explicit excited-level validation is limited to K <= 5")
    t = _check_grid(t_grid)
    L, n = full_register_liouvillian(params)
    C = params.channels
    rho = np.zeros((n, n), dtype=complex)
    rho[0, 0] = rho0.rho_TT
    for c in range(C):
        rho[1 + c, 1 + c] = rho0.rho_SS[c]
        rho[1 + c, 0] = rho0.rho_ST[c]
        rho[0, 1 + c] = np.conj(rho0.rho_ST[c])
    r = rho.reshape(-1)
    out = np.empty(len(t))
    out[0] = rho0.fidelity
    step_cache = {}
    for i in range(1, len(t)):
        dt = float(t[i] - t[i - 1])
        if dt not in step_cache:
            step_cache[dt] = expm(L * dt)
        r = step_cache[dt] @ r
        R = r.reshape(n, n)
        out[i] = R[0, 0].real / np.trace(R).real
    return out
