import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from mott_register.dynamics import (
    RegisterProjector,
    energy_expectation,
    evolve,
    evolve_restricted,
    fock_state,
    krylov_step,
    overlap_trace,
    particle_hole_states,
    perturbative_ground_vector,
    propagate,
    register_fidelity,
    register_fidelity_trace,
    restricted_basis,
    unit_filled_state,
)
from mott_register.fock import FockBasis
from mott_register.hamiltonian import ModelParams, build_hamiltonian


def ring(N, U=50.0, **kw):
    params = ModelParams(J=1.0, U=U, M=N, N=N, boundary="periodic", **kw)
    basis = FockBasis(N, N)
    return params, basis, build_hamiltonian(params, basis)


def test_two_site_ring_against_matrix_exponential():
    params, basis, H = ring(2, U=7.0)
    psi0 = fock_state(basis, (1, 1))
    t = np.linspace(0, 3, 31)
    for method in ("dense", "krylov"):
        states = evolve(H, psi0, t, method=method)
        for ti, psi in zip(t, states):
            np.testing.assert_allclose(psi, expm(-1j * H.toarray() * ti) @ psi0, atol=1e-10)


def test_diagonal_hamiltonian_only_adds_phases():
    params = ModelParams(J=1e-300, U=3.0, M=4, N=4, delta=0.7)
    basis = FockBasis(4, 4)
    H = build_hamiltonian(params, basis)
    rng = np.random.default_rng(3)
    psi0 = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    psi0 /= np.linalg.norm(psi0)
    for psi in propagate(H, psi0, np.linspace(0, 5, 11), method="krylov"):
        np.testing.assert_allclose(np.abs(psi), np.abs(psi0), atol=1e-12)


def test_dense_and_krylov_routes_agree():
    _, basis, H = ring(6)
    psi0 = unit_filled_state(basis)
    t = np.linspace(0, 2, 201)
    dense = overlap_trace(H, psi0, t, psi0, method="dense")
    krylov = overlap_trace(H, psi0, t, psi0, method="krylov")
    assert np.abs(dense - krylov).max() <= 1e-10


def test_norm_and_energy_conserved():
    params = ModelParams(J=1.0, U=20.0, M=6, N=5, delta=0.8)
    basis = FockBasis(5, 6)
    H = build_hamiltonian(params, basis)
    rng = np.random.default_rng(5)
    psi0 = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    psi0 /= np.linalg.norm(psi0)
    e0 = energy_expectation(H, psi0)
    for psi in propagate(H, psi0, np.linspace(0, 4, 41), method="krylov"):
        assert abs(np.linalg.norm(psi) - 1) <= 1e-10
        assert abs(energy_expectation(H, psi) - e0) <= 1e-8 * abs(e0)


def test_time_grid_validation():
    _, basis, H = ring(3)
    psi0 = unit_filled_state(basis)
    with pytest.raises(ValueError):
        evolve(H, psi0, [0.1, 0.2])
    with pytest.raises(ValueError):
        evolve(H, psi0, [0.0, 0.2, 0.2])
    with pytest.raises(ValueError):
        evolve(H, psi0, [0.0, 1.0], method="euler")


def test_krylov_zero_step_and_zero_vector():
    _, basis, H = ring(3)
    v = unit_filled_state(basis)
    np.testing.assert_array_equal(krylov_step(H, v, 0.0), v)
    np.testing.assert_array_equal(krylov_step(H, np.zeros_like(v), 1.0), np.zeros_like(v))


def test_unit_filled_needs_commensurate_filling():
    with pytest.raises(ValueError):
        unit_filled_state(FockBasis(3, 4))


def test_register_projector_examples():
    params = ModelParams(J=1.0, U=60.0, M=7, N=5, K=3)
    basis = FockBasis(5, 7)
    proj = RegisterProjector(params, basis)
    assert register_fidelity(fock_state(basis, (2, 0, 1, 1, 1, 0, 0)), proj) == 1.0
    assert register_fidelity(fock_state(basis, (1, 1, 1, 0, 2, 0, 0)), proj) == 0.0
    rng = np.random.default_rng(1)
    psi = rng.normal(size=basis.size)
    np.testing.assert_array_equal(proj @ (proj @ psi), proj @ psi)
    with pytest.raises(ValueError):
        register_fidelity(np.ones(3), proj)


def test_register_fidelity_trace_is_a_probability():
    params = ModelParams(J=1.0, U=30.0, M=5, N=5, delta=1.0, K=3)
    basis = FockBasis(5, 5)
    H = build_hamiltonian(params, basis)
    trace = register_fidelity_trace(H, unit_filled_state(basis), np.linspace(0, 3, 61), RegisterProjector(params, basis))
    assert trace[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all((trace >= 0) & (trace <= 1 + 1e-12))


def test_particle_hole_states_orthonormal():
    for N in (4, 5, 6, 7):
        S = particle_hole_states(FockBasis(N, N))
        np.testing.assert_allclose(S @ S.T, np.eye(N // 2), atol=1e-12)


def test_perturbative_ground_vector_against_dense_ground_state():
    params, basis, H = ring(6, U=100.0)
    psi = perturbative_ground_vector(params, basis)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    ground = np.linalg.eigh(H.toarray())[1][:, 0]
    assert abs(psi @ ground) ** 2 >= 1 - (1.0 / 100.0) ** 2


def test_restricted_basis_dimension_and_hermiticity():
    params = ModelParams(J=1.0, U=100.0, M=7, N=7, delta=2.0, boundary="periodic")
    states, H = restricted_basis(params)
    assert len(states) == 7 * 6 + 1
    np.testing.assert_allclose(H, H.T)
    assert H[0, 0] == 0.0
    with pytest.raises(ValueError):
        restricted_basis(ModelParams(J=1.0, U=10.0, M=5, N=4))


def test_restricted_without_tunnelling_is_static():
    params = ModelParams(J=1e-300, U=100.0, M=5, N=5, delta=2.0, boundary="periodic")
    np.testing.assert_allclose(evolve_restricted(params, np.linspace(0, 10, 11)), 1.0)


@pytest.mark.parametrize("N", [4, 5, 6])
@pytest.mark.parametrize("U", [50.0, 100.0])
def test_restricted_tracks_full_basis(N, U):
    params, basis, H = ring(N, U=U)
    t = np.linspace(0, 10, 2001)
    psi0 = unit_filled_state(basis)
    full = overlap_trace(H, psi0, t, psi0)
    restricted = evolve_restricted(params, t)
    assert np.abs(full - restricted).max() <= 20 * N / U**2


@settings(max_examples=10, deadline=None)
@given(N=st.integers(2, 5), U=st.floats(5, 80), seed=st.integers(0, 2**32 - 1))
def test_unitarity_property(N, U, seed):
    _, basis, H = ring(N, U=U)
    rng = np.random.default_rng(seed)
    psi0 = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    psi0 /= np.linalg.norm(psi0)
    for psi in propagate(H, psi0, np.linspace(0, 2, 5), method="krylov"):
        assert abs(np.linalg.norm(psi) - 1) <= 1e-10
    assert math.isfinite(energy_expectation(H, psi0))
