"""Truncated-Wigner initial states of the rotating ideal gas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

from .basis import FieldState, ModeTable, TrapGeometry

HBAR = constants.hbar
KB = constants.k


@dataclass(frozen=True)
class InitialEnsembleSpec:
    """Grand-canonical ensemble the initial fields are drawn from.

    ``T0`` in kelvin, ``mu0`` in joules measured from the bottom of the 3D
    trap, ``Omega0`` in rad/s.
    """

    T0: float
    mu0: float
    Omega0: float
    n_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def reduced(self, trap: TrapGeometry) -> tuple[float, float]:
        """``(mu_tilde, T_tilde)`` in units of hbar omega_r."""
        return (reduced_chemical_potential(self.mu0, trap),
                KB * self.T0 / (HBAR * trap.omega_r))


def reduced_chemical_potential(mu: float, trap: TrapGeometry) -> float:
    """Chemical potential of the 2D band in units of hbar omega_r.

    The axial zero-point energy hbar omega_z / 2 is removed so that the
    lowest band mode sits at hbar omega_r.
    """
    return (mu - 0.5 * HBAR * trap.omega_z) / (HBAR * trap.omega_r)


def thermal_occupation(freq, mu_tilde: float, T_tilde: float):
    """Bose-Einstein occupation of modes with reduced frequency ``freq``."""
    freq = np.asarray(freq, float)
    if np.any(freq <= mu_tilde):
        raise ValueError("mode energy must exceed the chemical potential")
    return 1.0 / np.expm1((freq - mu_tilde) / T_tilde)


def make_rng(seed: int, traj: int = 0, sample: int = 0) -> np.random.Generator:
    """Independent counter-based stream for (seed, trajectory, sample)."""
    ss = np.random.SeedSequence(seed, spawn_key=(traj, sample))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Complex Gaussians with <|eta|^2> = 1 and <eta^2> = 0."""
    xy = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)))
    return (xy[0] + 1j * xy[1]) * np.sqrt(0.5)


def sample_wigner(spec: InitialEnsembleSpec, table: ModeTable,
                  trap: TrapGeometry, traj: int = 0, sample: int = 0) -> FieldState:
    """One Wigner sample alpha = sqrt(N + 1/2) eta."""
    mu_t, T_t = spec.reduced(trap)
    N = thermal_occupation(table.freqs, mu_t, T_t)
    eta = complex_normal(make_rng(spec.seed, traj, sample), len(table))
    return FieldState(np.sqrt(N + 0.5) * eta)


def sample_ensemble(spec: InitialEnsembleSpec, table: ModeTable,
                    trap: TrapGeometry, traj: int = 0) -> np.ndarray:
    """``spec.n_samples`` independent samples stacked as rows."""
    return np.stack([sample_wigner(spec, table, trap, traj, j).coeffs
                     for j in range(spec.n_samples)])


def ensemble_onebody_matrix(samples, half_quantum: bool = True) -> np.ndarray:
    """rho_ij = <conj(alpha_i) alpha_j> - delta_ij / 2 over the samples.

    ``samples`` is a sequence of FieldState or a 2D array of coefficients.
    """
    A = np.asarray([getattr(s, "coeffs", s) for s in samples], dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ValueError("need a non-empty stack of coefficient vectors")
    rho = A.conj().T @ A / A.shape[0]
    if half_quantum:
        rho -= 0.5 * np.eye(A.shape[1])
    return rho
