import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotsgpe.basis import ModeTable, TrapGeometry
from rotsgpe.sampler import (InitialEnsembleSpec, complex_normal,
                             ensemble_onebody_matrix, make_rng,
                             reduced_chemical_potential, sample_ensemble,
                             sample_wigner, thermal_occupation)

HBAR = 1.054571817e-34
KB = 1.380649e-23
MASS = 1.4431608971290477e-25


@pytest.fixture
def trap():
    return TrapGeometry(2 * math.pi * 8.3, 2 * math.pi * 5.3,
                        0.979 * 2 * math.pi * 8.3, MASS)


@pytest.mark.parametrize("multiple, expected", [(0.5, 0.34036), (3.5, 4.29819)])
def test_reduced_chemical_potential(trap, multiple, expected):
    # eps000 / (hbar omega_r) = 1 + 5.3 / (2 * 8.3); subtract the axial half quantum
    eps = 1 + 5.3 / 16.6
    assert multiple * eps - 5.3 / 16.6 == pytest.approx(expected, abs=1e-5)
    mu = multiple * trap.eps000
    assert reduced_chemical_potential(mu, trap) == pytest.approx(expected, abs=1e-5)


def test_reduced_temperature(trap):
    spec = InitialEnsembleSpec(T0=12e-9, mu0=0.5 * trap.eps000, Omega0=trap.Omega)
    _, T_t = spec.reduced(trap)
    assert T_t == pytest.approx(KB * 12e-9 / (HBAR * 2 * math.pi * 8.3), rel=1e-9)
    assert T_t == pytest.approx(30.13, abs=0.01)


@settings(max_examples=50, deadline=None)
@given(w=st.floats(0.5, 50.0), gap=st.floats(1e-3, 10.0), T=st.floats(0.1, 100.0))
def test_occupation_is_bose_einstein(w, gap, T):
    mu = w - gap
    N = thermal_occupation(np.array([w]), mu, T)[0]
    # the representable gap, not the requested one
    assert N == pytest.approx(1 / math.expm1((w - mu) / T), rel=1e-12)


def test_occupation_rejects_condensed_modes():
    with pytest.raises(ValueError):
        thermal_occupation(np.array([1.0, 2.0]), 1.0, 5.0)


def test_streams_are_reproducible_and_distinct():
    a = make_rng(7, 3, 1).standard_normal(8)
    np.testing.assert_array_equal(a, make_rng(7, 3, 1).standard_normal(8))
    for other in [(8, 3, 1), (7, 4, 1), (7, 3, 0)]:
        assert not np.array_equal(a, make_rng(*other).standard_normal(8))


def test_complex_normal_moments():
    eta = complex_normal(make_rng(0), 400_000)
    se = 1 / math.sqrt(eta.size)
    assert abs(np.mean(np.abs(eta) ** 2) - 1) < 5 * se
    assert abs(np.mean(eta ** 2)) < 5 * se
    assert abs(np.mean(np.abs(eta) ** 4) - 2) < 5 * math.sqrt(20) * se


def test_wigner_moments(trap):
    table = ModeTable(2, 0.5)
    spec = InitialEnsembleSpec(T0=12e-9, mu0=0.5 * trap.eps000, Omega0=trap.Omega,
                               n_samples=4000, seed=11)
    S = sample_ensemble(spec, table, trap)
    mu_t, T_t = spec.reduced(trap)
    target = thermal_occupation(table.freqs, mu_t, T_t) + 0.5
    occ = np.mean(np.abs(S) ** 2, axis=0)
    z = (occ - target) / (target / math.sqrt(len(S)))
    assert np.max(np.abs(z)) < 4.5
    # phase-invariant: anomalous moment vanishes
    assert np.max(np.abs(np.mean(S ** 2, axis=0)) / target) < 5 / math.sqrt(len(S))
    rho = ensemble_onebody_matrix(S)
    np.testing.assert_allclose(rho, rho.conj().T)
    np.testing.assert_allclose(np.diag(rho).real, occ - 0.5)


def test_sample_matches_ensemble_row(trap):
    table = ModeTable(4, 0.979)
    spec = InitialEnsembleSpec(T0=12e-9, mu0=0.5 * trap.eps000, Omega0=trap.Omega,
                               n_samples=3, seed=2)
    S = sample_ensemble(spec, table, trap, traj=5)
    np.testing.assert_array_equal(S[1], sample_wigner(spec, table, trap, 5, 1).coeffs)


def test_onebody_matrix_without_half_quantum():
    A = np.array([[1 + 1j, 0], [0, 2]])
    rho = ensemble_onebody_matrix(A, half_quantum=False)
    np.testing.assert_allclose(rho, [[1.0, 0], [0, 2.0]])
    np.testing.assert_allclose(ensemble_onebody_matrix(A), [[0.5, 0], [0, 1.5]])


@pytest.mark.parametrize("kwargs", [dict(T0=0.0), dict(n_samples=0)])
def test_spec_validation(kwargs):
    base = dict(T0=1e-9, mu0=0.0, Omega0=0.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        InitialEnsembleSpec(**base)
