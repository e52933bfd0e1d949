import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mott_register.dynamics import RegisterProjector
from mott_register.fock import FockBasis
from mott_register.hamiltonian import ModelParams, build_hamiltonian
from mott_register.thermal import (
    ConvergenceError,
    SpectrumTable,
    TruncationError,
    characteristic_temperatures,
    diagonalize,
    temperature_grid,
    thermal_fidelity,
)


def system(M=7, N=5, K=3, U=30.0, delta=5.0, J=1.0):
    params = ModelParams(J=J, U=U, M=M, N=N, delta=delta, K=K)
    basis = FockBasis(N, M)
    return params, basis, build_hamiltonian(params, basis), RegisterProjector(params, basis)


def test_zero_tunnelling_spectrum_is_the_diagonal():
    params, basis, H, proj = system(J=1e-300)
    spec = diagonalize(H, projector=proj)
    np.testing.assert_allclose(spec.eigenvalues, np.sort(H.diagonal()), atol=1e-12)
    # degenerate levels may mix, but the total overlap is the trace of the projector
    assert spec.overlaps.sum() == pytest.approx(proj.mask.sum(), abs=1e-9)


def test_lowest_states_match_dense():
    params, basis, H, proj = system(M=5, N=4, K=3, U=20.0, delta=1.0)
    dense = diagonalize(H, projector=proj)
    lanczos = diagonalize(H, mode="lowest", k=10, projector=proj)
    np.testing.assert_allclose(lanczos.eigenvalues, dense.eigenvalues[:10], atol=1e-9)
    # dimension 70 falls back to LAPACK, so repeat on a case that goes through ARPACK
    params, basis, H, proj = system(M=9, N=6, K=3, U=20.0, delta=1.0)
    dense = diagonalize(H, projector=proj)
    lanczos = diagonalize(H, mode="lowest", k=10, projector=proj)
    assert lanczos.residuals.max() <= 1e-8 * 200
    np.testing.assert_allclose(lanczos.eigenvalues, dense.eigenvalues[:10], atol=1e-9)
    np.testing.assert_allclose(lanczos.overlaps[:3], dense.overlaps[:3], atol=1e-8)


def test_zero_temperature_is_ground_overlap():
    _, _, H, proj = system()
    spec = diagonalize(H, projector=proj)
    assert thermal_fidelity(spec, 0.0) == pytest.approx(spec.overlaps[0], abs=1e-14)
    assert thermal_fidelity(spec, 1e-3) == pytest.approx(spec.overlaps[0], abs=1e-12)


def test_degenerate_ground_state_is_averaged():
    spec = SpectrumTable(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.5]), 3)
    assert thermal_fidelity(spec, 0.0) == 0.5


def test_infinite_temperature_is_register_fraction():
    _, basis, H, proj = system()
    spec = diagonalize(H, projector=proj)
    assert thermal_fidelity(spec, 1e9) == pytest.approx(proj.mask.sum() / basis.size, rel=1e-6)


def test_window_matches_full_spectrum():
    _, _, H, proj = system()
    full = diagonalize(H, projector=proj)
    win = diagonalize(H, mode="window", window=60.0, projector=proj)
    assert not win.complete
    T = np.linspace(0.5, 3.0, 6)
    np.testing.assert_allclose(thermal_fidelity(win, T), thermal_fidelity(full, T), atol=1e-6)


def test_truncation_error_names_required_window():
    _, _, H, proj = system()
    win = diagonalize(H, mode="window", window=20.0, projector=proj)
    with pytest.raises(TruncationError) as info:
        thermal_fidelity(win, 30.0)
    assert info.value.required_window > 20.0


def test_dense_budget_and_bad_arguments():
    _, _, H, proj = system()
    with pytest.raises(ValueError, match="dense budget"):
        diagonalize(H, dense_budget=100)
    with pytest.raises(ValueError):
        diagonalize(H, mode="window")
    with pytest.raises(ValueError):
        diagonalize(H, mode="bisection")
    with pytest.raises(ValueError):
        diagonalize(H, projector=np.ones(3, dtype=bool))
    spec = diagonalize(H, projector=proj)
    with pytest.raises(ValueError):
        thermal_fidelity(spec, -1.0)


def test_unconverged_pairs_are_reported():
    _, _, H, _ = system()
    with pytest.raises(ConvergenceError) as info:
        diagonalize(H, tol=1e-30)
    assert info.value.residuals


def test_register_fidelity_decreases_with_temperature():
    _, _, H, proj = system()
    spec = diagonalize(H, projector=proj)
    F = thermal_fidelity(spec, temperature_grid(70.875))
    assert np.all(np.diff(F) <= 1e-12)


@settings(max_examples=20, deadline=None)
@given(offset=st.floats(-1e3, 1e3), T=st.floats(0.05, 100))
def test_energy_offset_invariance(offset, T):
    _, _, H, proj = system(M=5, N=4, K=3, U=20.0, delta=1.0)
    spec = diagonalize(H, projector=proj)
    assert thermal_fidelity(spec.shifted(offset), T) == pytest.approx(thermal_fidelity(spec, T), abs=1e-12)


def test_spectrum_table_validation():
    with pytest.raises(ValueError):
        SpectrumTable(np.array([1.0, 0.0]), np.zeros(2), 2)
    with pytest.raises(ValueError):
        SpectrumTable(np.zeros(2), np.zeros(3), 3)


def test_characteristic_temperatures():
    T = characteristic_temperatures(60.0, 3.375, 9, 5)
    assert T.T_d == pytest.approx(6.0)
    assert T.T_h == pytest.approx(70.875)
    assert T.T_max == T.T_d == T[2]
    with pytest.raises(ValueError):
        characteristic_temperatures(60.0, 3.375, 5, 7)


def test_temperature_grid():
    grid = temperature_grid(70.875)
    assert len(grid) >= 40
    assert grid[0] == pytest.approx(0.1) and grid[-1] == pytest.approx(141.75)
    assert np.all(np.diff(np.log(grid)) == pytest.approx(math.log(1417.5) / 47))
    with pytest.raises(ValueError):
        temperature_grid(0.01)
