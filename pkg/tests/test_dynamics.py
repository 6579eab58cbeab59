import math
import warnings

import numpy as np
import pytest

from conftest import random_coeffs
from rotsgpe.basis import ModeTable, build_quadrature
from rotsgpe.dynamics import (EvolutionParams, Stepper, TrajectoryArchive,
                              apply_growth, drift, evolve, evolve_batch,
                              gpe_rhs, interaction_strength, noise_variance,
                              observables, reduced_temperature, sample_noise)
from rotsgpe.sampler import make_rng

MASS = 1.4431608971290477e-25
A_S = 100.4 * 5.29177210903e-11
PERIOD = 2 * math.pi


@pytest.fixture(scope="module")
def small():
    t = ModeTable(6, 0.5)
    return t, build_quadrature(t)


def test_interaction_strength():
    omega_z = 2 * math.pi * 5.3
    hbar = 1.054571817e-34
    # independent route through the 2D coupling and the slab thickness
    L_z = math.sqrt(2 * math.pi * hbar / (MASS * omega_z))
    u2d = 4 * math.pi * hbar ** 2 * A_S / (MASS * L_z)
    omega_r = 2 * math.pi * 8.3
    r0sq = hbar / (MASS * omega_r)
    lam = interaction_strength(A_S, MASS, omega_z)
    # rounded hbar enters through sqrt(hbar) in l_z
    assert lam == pytest.approx(u2d / (hbar * omega_r * r0sq), rel=1e-9)
    assert lam == pytest.approx(5.686e-3, rel=1e-3)


def test_reduced_temperature():
    assert reduced_temperature(1e-9, 2 * math.pi * 8.3) == pytest.approx(2.5104, rel=1e-4)


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(Gamma=-1.0), dict(lam=-1.0),
                                    dict(t_end=-1.0), dict(snapshot_stride=0),
                                    dict(scheme="euler")])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        EvolutionParams(**kwargs)


def test_default_step_is_a_thousandth_period():
    p = EvolutionParams()
    assert p.dt == pytest.approx(PERIOD * 1e-3)
    assert EvolutionParams(t_end=10 * PERIOD).n_steps == 10_000


@pytest.mark.parametrize("scheme, tol", [("rk4ip", 1e-13), ("rk4", 1e-4)])
def test_free_evolution_is_a_phase(small, scheme, tol):
    t, q = small
    a = random_coeffs(np.random.default_rng(0), len(t))
    p = EvolutionParams(dt=0.01, t_end=PERIOD, noise_on=False, scheme=scheme,
                        snapshot_stride=10 ** 6)
    arch = evolve(a, p, q, t)
    exact = np.exp(-1j * t.freqs * arch.times[-1]) * a
    assert np.max(np.abs(arch.coeffs[-1] - exact)) < tol * np.max(np.abs(a))


def test_linear_growth_is_exponential(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(1), len(t))
    p = EvolutionParams(Gamma=0.05, mu_tilde=3.0, dt=0.01, t_end=5.0, noise_on=False,
                        snapshot_stride=10 ** 6)
    arch = evolve(a, p, q, t)
    T = arch.times[-1]
    exact = np.exp((-(1j + 0.05) * t.freqs + 0.05 * 3.0) * T) * a
    np.testing.assert_allclose(arch.coeffs[-1], exact, rtol=1e-12)


def test_drift_pieces_agree(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(2), len(t))
    p = EvolutionParams(lam=0.02, Gamma=0.1, mu_tilde=2.0, dt=0.01)
    growth = apply_growth(a, p, t, q) / p.dt
    np.testing.assert_allclose(drift(a, p, q, t), gpe_rhs(a, p, q, t) + growth,
                               rtol=1e-12)


def test_growth_needs_tables_when_interacting(small):
    t, _ = small
    with pytest.raises(ValueError):
        apply_growth(np.ones(len(t)), EvolutionParams(lam=0.1, Gamma=0.1), t)


def _conserved_drift(t, q, a, dt, periods, scheme="rk4ip"):
    p = EvolutionParams(lam=0.05, dt=dt, t_end=periods * PERIOD, noise_on=False,
                        scheme=scheme, snapshot_stride=10 ** 9)
    o = evolve(a, p, q, t).observable_array()
    return np.max(np.abs(o[-1] - o[0]) / np.abs(o[0]))


def test_invariants_hold_without_reservoir(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(4), len(t)) * 3
    assert _conserved_drift(t, q, a, 0.004, 1) < 1e-9


@pytest.mark.filterwarnings("ignore:dt=.*coarse")
def test_fourth_order_convergence(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(5), len(t)) * 3
    p0 = dict(lam=0.05, Gamma=0.02, mu_tilde=3.0, t_end=2.0, noise_on=False,
              snapshot_stride=10 ** 9)
    for scheme in ("rk4", "rk4ip"):
        ref = evolve(a, EvolutionParams(dt=0.0025, scheme=scheme, **p0), q, t).coeffs[-1]
        e1 = np.max(np.abs(evolve(a, EvolutionParams(dt=0.04, scheme=scheme, **p0),
                                  q, t).coeffs[-1] - ref))
        e2 = np.max(np.abs(evolve(a, EvolutionParams(dt=0.02, scheme=scheme, **p0),
                                  q, t).coeffs[-1] - ref))
        assert 12 < e1 / e2 < 20, scheme


def test_schemes_agree(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(6), len(t)) * 3
    p = dict(lam=0.05, Gamma=0.02, mu_tilde=3.0, t_end=2.0, noise_on=False, dt=0.005)
    x = evolve(a, EvolutionParams(scheme="rk4", **p), q, t).coeffs[-1]
    y = evolve(a, EvolutionParams(scheme="rk4ip", **p), q, t).coeffs[-1]
    assert np.max(np.abs(x - y)) < 1e-5 * np.max(np.abs(x))


def test_noise_increment_statistics(small):
    t, _ = small
    p = EvolutionParams(Gamma=0.1, T_tilde=4.0, dt=0.05)
    assert noise_variance(p, p.dt) == pytest.approx(2 * 0.1 * 4.0 * 0.05)
    rng = make_rng(3)
    dW = np.array([sample_noise(t, p, p.dt, rng) for _ in range(4000)])
    var = np.mean(np.abs(dW) ** 2)
    assert var == pytest.approx(0.04, rel=5 / math.sqrt(dW.size))
    assert abs(np.mean(dW ** 2)) < 5 * 0.04 / math.sqrt(dW.size)
    off = EvolutionParams(Gamma=0.1, T_tilde=4.0, noise_on=False)
    assert not np.any(sample_noise(t, off, 0.05, rng))


def test_noise_requires_generator(small):
    t, q = small
    with pytest.raises(ValueError):
        evolve(np.zeros(len(t)), EvolutionParams(Gamma=0.1, T_tilde=1.0, t_end=1.0), q, t)


def _euler_maruyama(freq, Gamma, mu, T, dt, n_steps, n_paths, rng):
    a = np.zeros(n_paths, complex)
    acc = 0.0
    burn = n_steps // 3
    for k in range(n_steps):
        dW = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) \
            * math.sqrt(Gamma * T * dt)
        a = a + (-(1j + Gamma) * freq * a + Gamma * mu * a) * dt + dW
        if k >= burn:
            acc += np.mean(np.abs(a) ** 2)
    return acc / (n_steps - burn)


def test_stationary_occupation_matches_euler_maruyama():
    t = ModeTable(0, 0.0)
    q = build_quadrature(t)
    Gamma, mu, T = 0.5, 0.2, 3.0
    dt, n_steps, B = 0.01, 6000, 400
    p = EvolutionParams(Gamma=Gamma, mu_tilde=mu, T_tilde=T, dt=dt, t_end=n_steps * dt,
                        snapshot_stride=1)
    rngs = [make_rng(21, b, 1) for b in range(B)]
    arch = evolve_batch(np.zeros((B, 1)), p, q, t, rngs)
    occ = np.array([a.observable_array()[n_steps // 3:, 0] for a in arch])
    ours = occ.mean()
    ref = _euler_maruyama(1.0, Gamma, mu, T, dt / 4, 4 * n_steps, B, np.random.default_rng(9))
    exact = T / (1.0 - mu)
    # correlation time 1/(Gamma*(1-mu)) = 2.5 gives ~1e4 independent samples
    se = exact / math.sqrt(B * (n_steps * dt * 2 / 3) / (2 / (Gamma * (1 - mu))))
    assert abs(ours - exact) < 5 * se
    assert abs(ref - exact) < 5 * se + exact * Gamma * (1 - mu) * dt
    assert abs(ours - ref) < 7 * se + exact * Gamma * (1 - mu) * dt


def test_batching_does_not_change_paths(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(7), (2, len(t)))
    p = EvolutionParams(Gamma=0.1, T_tilde=2.0, mu_tilde=1.0, dt=0.01, t_end=1.5,
                        snapshot_stride=30)
    both = evolve_batch(a, p, q, t, [make_rng(1, 0, 1), make_rng(1, 1, 1)])
    alone = evolve(a[1], p, q, t, make_rng(1, 1, 1))
    np.testing.assert_array_equal(both[1].coeff_array(), alone.coeff_array())
    pi = EvolutionParams(lam=0.05, Gamma=0.1, T_tilde=2.0, mu_tilde=1.0, dt=0.01,
                         t_end=1.5, snapshot_stride=30)
    both = evolve_batch(a, pi, q, t, [make_rng(1, 0, 1), make_rng(1, 1, 1)])
    alone = evolve(a[1], pi, q, t, make_rng(1, 1, 1))
    np.testing.assert_allclose(both[1].coeff_array(), alone.coeff_array(), rtol=1e-12)


def test_stepper_needs_generator_per_row(small):
    t, q = small
    p = EvolutionParams(Gamma=0.1, T_tilde=2.0, dt=0.01)
    s = Stepper(p, q, t, [make_rng(0)])
    with pytest.raises(ValueError):
        s.step(np.zeros((2, len(t)), complex))


@pytest.mark.filterwarnings("ignore:dt=.*coarse")
def test_snapshots_and_window(small):
    t, q = small
    p = EvolutionParams(dt=0.1, t_end=1.0, noise_on=False, snapshot_stride=3)
    arch = evolve(np.ones(len(t)), p, q, t)
    assert arch.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert arch.window(0.25, 0.95).shape == (3, len(t))
    assert len(arch.snapshots) == len(arch)
    with pytest.raises(ValueError):
        arch.append(0.5, arch.coeffs[0], arch.observables[0])


def test_observables_layout(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(8), (3, len(t)))
    p = EvolutionParams(lam=0.1)
    o = observables(a, p, q, t)
    assert o.shape == (3, 3)
    np.testing.assert_allclose(o[:, 0], np.sum(np.abs(a) ** 2, axis=1))
    np.testing.assert_allclose(o[:, 2], np.sum(t.l * np.abs(a) ** 2, axis=1))


def test_blow_up_is_reported(small):
    t, q = small
    a = random_coeffs(np.random.default_rng(9), len(t)) * 50
    p = EvolutionParams(lam=50.0, dt=0.5, t_end=50.0, noise_on=False, scheme="rk4")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(all="ignore"), pytest.raises(FloatingPointError, match="non-finite"):
            evolve(a, p, q, t)


def test_coarse_step_warns(small):
    t, q = small
    p = EvolutionParams(dt=0.2, t_end=0.2, noise_on=False)
    with pytest.warns(RuntimeWarning, match="coarse"):
        evolve(np.ones(len(t)), p, q, t)


def test_empty_archive_defaults():
    arch = TrajectoryArchive()
    assert len(arch) == 0 and arch.observable_array().shape == (0, 3)
