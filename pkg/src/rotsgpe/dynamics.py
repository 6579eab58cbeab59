"""Simple-growth SGPE in the rotating frame.

Reduced units: time in 1/omega_r, energies in hbar omega_r.  The coefficient
equation is

    d alpha = [-(i + Gamma) L(alpha) + Gamma mu alpha] dt + dW,
    L(alpha) = omega * alpha + lambda * F(alpha),

with ``<dW* dW> = 2 Gamma T dt`` per mode.  Noise is additive, so Ito and
Stratonovich readings coincide and the deterministic drift can be advanced
by any fourth-order Runge-Kutta step before the noise increment is added.

Two deterministic steppers are provided.  ``"rk4"`` is the classical scheme
on the full drift.  ``"rk4ip"`` runs the same tableau in the interaction
picture of the diagonal linear part, which is then propagated exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
from scipy import constants

from .basis import (FieldState, ModeTable, QuadratureTables, nonlinear_term,
                    quartic_integral, to_position)

HBAR = constants.hbar
KB = constants.k

_STABILITY_WARN = 0.5
_NOISE_BLOCK = 64


@dataclass(frozen=True)
class EvolutionParams:
    lam: float = 0.0
    mu_tilde: float = 0.0
    T_tilde: float = 0.0
    Gamma: float = 0.0
    dt: float = 2 * math.pi * 1e-3
    t_end: float = 0.0
    noise_on: bool = True
    snapshot_stride: int = 100
    scheme: str = "rk4ip"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.Gamma < 0 or self.lam < 0:
            raise ValueError("Gamma and lambda must be non-negative")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.scheme not in ("rk4", "rk4ip"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


def interaction_strength(a_s: float, mass: float, omega_z: float) -> float:
    """Reduced 2D coupling sqrt(8 pi) a / l_z, l_z = sqrt(hbar / m omega_z)."""
    l_z = math.sqrt(HBAR / (mass * omega_z))
    return math.sqrt(8 * math.pi) * a_s / l_z


def reduced_temperature(T: float, omega_r: float) -> float:
    return KB * T / (HBAR * omega_r)


# --------------------------------------------------------------------------
# right-hand side pieces

def _coeffs(field) -> np.ndarray:
    return np.asarray(getattr(field, "coeffs", field), dtype=complex)


def gp_operator(alpha, params: EvolutionParams, quad: QuadratureTables,
                table: ModeTable) -> np.ndarray:
    """L_GP alpha = omega alpha + lambda F(alpha) in mode space."""
    alpha = _coeffs(alpha)
    out = table.freqs * alpha
    if params.lam != 0:
        out = out + params.lam * nonlinear_term(alpha, quad)
    return out


def gpe_rhs(field, params: EvolutionParams, quad: QuadratureTables,
            table: ModeTable) -> np.ndarray:
    """Projected GPE: d alpha / dt = -i L_GP alpha."""
    return -1j * gp_operator(field, params, quad, table)


def apply_growth(field, params: EvolutionParams, table: ModeTable,
                 quad: Optional[QuadratureTables] = None) -> np.ndarray:
    """Growth increment Gamma (mu - L_GP) alpha dt over one step."""
    alpha = _coeffs(field)
    if params.lam != 0 and quad is None:
        raise ValueError("the nonlinear growth term needs quadrature tables")
    L = gp_operator(alpha, params, quad, table)
    return params.Gamma * (params.mu_tilde * alpha - L) * params.dt


def drift(alpha, params: EvolutionParams, quad: QuadratureTables,
          table: ModeTable) -> np.ndarray:
    L = gp_operator(alpha, params, quad, table)
    out = -(1j + params.Gamma) * L
    if params.Gamma:
        out = out + params.Gamma * params.mu_tilde * alpha
    return out


def noise_variance(params: EvolutionParams, dt: float) -> float:
    """<|dW|^2> per mode per step."""
    if not params.noise_on:
        return 0.0
    return 2 * params.Gamma * params.T_tilde * dt


def sample_noise(table: ModeTable, params: EvolutionParams, dt: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian increment with <dW* dW> = 2 Gamma T dt per mode."""
    var = noise_variance(params, dt)
    if var == 0:
        return np.zeros(len(table), dtype=complex)
    xy = rng.standard_normal((2, len(table)))
    return (xy[0] + 1j * xy[1]) * math.sqrt(var / 2)


# --------------------------------------------------------------------------
# observables

def observables(alpha, params: EvolutionParams, quad: QuadratureTables,
                table: ModeTable) -> np.ndarray:
    """``[N_GP, E_GP, L_z]`` along the last axis (batch axes preserved)."""
    alpha = _coeffs(alpha)
    dens = alpha.real ** 2 + alpha.imag ** 2
    N = dens.sum(-1)
    E = (table.freqs * dens).sum(-1)
    if params.lam != 0:
        E = E + 0.5 * params.lam * quartic_integral(to_position(alpha, quad), quad)
    Lz = (table.l * dens).sum(-1)
    return np.stack([N, E, Lz], axis=-1)


# --------------------------------------------------------------------------
# integrator

class Stepper:
    """Fixed-step integrator for a batch of trajectories.

    ``rngs`` holds one generator per trajectory; noise is drawn from each in
    blocks of a fixed number of steps so a trajectory's path does not depend
    on how trajectories are batched together.
    """

    def __init__(self, params: EvolutionParams, quad: QuadratureTables,
                 table: ModeTable, rngs=None):
        self.params = params
        self.quad = quad
        self.table = table
        self.rngs = list(rngs) if rngs is not None else []
        dt = params.dt
        self._k = (1j + params.Gamma) * table.freqs - params.Gamma * params.mu_tilde
        self._half = np.exp(-self._k * dt / 2)
        self._sigma = math.sqrt(noise_variance(params, dt) / 2)
        self._buf = None
        self._buf_pos = _NOISE_BLOCK

    def _nonlinear(self, alpha):
        # nonlinear part of the drift
        return -(1j + self.params.Gamma) * self.params.lam * nonlinear_term(alpha, self.quad)

    def _noise(self, shape):
        if self._sigma == 0:
            return None
        if self._buf_pos >= _NOISE_BLOCK:
            M = len(self.table)
            if len(shape) == 1:
                gens = self.rngs[:1]
            else:
                gens = self.rngs
            if len(gens) != (1 if len(shape) == 1 else shape[0]):
                raise ValueError("need one generator per trajectory for noise")
            blocks = [g.standard_normal((2, _NOISE_BLOCK, M)) for g in gens]
            xy = np.stack(blocks, axis=2)     # (2, block, traj, M)
            self._buf = (xy[0] + 1j * xy[1]) * self._sigma
            self._buf_pos = 0
        out = self._buf[self._buf_pos]
        self._buf_pos += 1
        return out.reshape(shape)

    def deterministic_step(self, alpha: np.ndarray) -> np.ndarray:
        p = self.params
        dt = p.dt
        if p.scheme == "rk4":
            f = lambda a: drift(a, p, self.quad, self.table)
            k1 = f(alpha)
            k2 = f(alpha + 0.5 * dt * k1)
            k3 = f(alpha + 0.5 * dt * k2)
            k4 = f(alpha + dt * k3)
            return alpha + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        E = self._half
        if p.lam == 0:
            return E * E * alpha
        aI = E * alpha
        k1 = E * self._nonlinear(alpha)
        k2 = self._nonlinear(aI + 0.5 * dt * k1)
        k3 = self._nonlinear(aI + 0.5 * dt * k2)
        k4 = self._nonlinear(E * (aI + dt * k3))
        return E * (aI + dt / 6 * (k1 + 2 * k2 + 2 * k3)) + dt / 6 * k4

    def step(self, alpha: np.ndarray) -> np.ndarray:
        out = self.deterministic_step(alpha)
        dW = self._noise(alpha.shape)
        if dW is not None:
            out = out + dW
        return out


@dataclass
class TrajectoryArchive:
    """Snapshots and observables of one trajectory."""

    times: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)
    observables: list = field(default_factory=list)
    params: Optional[EvolutionParams] = None
    rng_lineage: dict = field(default_factory=dict)

    def append(self, t: float, alpha: np.ndarray, obs: np.ndarray):
        if self.times and not t > self.times[-1]:
            raise ValueError("snapshot times must increase")
        self.times.append(float(t))
        self.coeffs.append(np.array(alpha, dtype=complex))
        self.observables.append(np.asarray(obs, float))

    @property
    def snapshots(self) -> list[FieldState]:
        return [FieldState(c, t) for c, t in zip(self.coeffs, self.times)]

    def coeff_array(self) -> np.ndarray:
        return np.array(self.coeffs)

    def observable_array(self) -> np.ndarray:
        return np.array(self.observables).reshape(-1, 3)

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Coefficients of the snapshots with t0 <= t <= t1."""
        t = np.asarray(self.times)
        sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
        return self.coeff_array()[sel]

    def __len__(self):
        return len(self.times)


def _check_stability(alpha, params, quad, table):
    if params.lam == 0 or quad is None:
        peak = 0.0
    else:
        psi = to_position(alpha, quad)
        peak = float(np.max(psi.real ** 2 + psi.imag ** 2))
    fastest = table.Nbar + 1 + params.lam * peak
    if params.dt * fastest > _STABILITY_WARN:
        warnings.warn(
            f"dt={params.dt:g} is coarse for the fastest frequency "
            f"{fastest:.3g} (dt*omega={params.dt * fastest:.3g})",
            RuntimeWarning, stacklevel=3)


def _abort(alpha, t, step):
    bad = np.abs(alpha)
    raise FloatingPointError(
        f"non-finite field at t={t:.6g} (step {step}); "
        f"max|alpha| before failure {np.nanmax(np.where(np.isfinite(bad), bad, np.nan)):.3g}")


def evolve_batch(initial, params: EvolutionParams, quad: QuadratureTables,
                 table: ModeTable, rngs=None,
                 observer: Optional[Callable] = None,
                 keep_snapshots: bool = True, t0: float = 0.0):
    """Evolve a stack of fields ``initial[B, M]`` together.

    Returns one :class:`TrajectoryArchive` per row.  ``observer(t, alpha)``
    is called at every snapshot with the full batch.
    """
    alpha = np.array(_coeffs(initial), dtype=complex, copy=True)
    single = alpha.ndim == 1
    if single:
        alpha = alpha[None]
    if alpha.shape[-1] != len(table):
        raise ValueError("coefficient length does not match the mode table")
    B = alpha.shape[0]
    if rngs is None:
        rngs = []
    stepper = Stepper(params, quad, table, rngs)
    _check_stability(alpha[0], params, quad, table)
    archives = [TrajectoryArchive(params=params) for _ in range(B)]

    def record(t):
        obs = observables(alpha, params, quad, table)
        for b in range(B):
            if keep_snapshots:
                archives[b].append(t, alpha[b], obs[b])
            else:
                archives[b].times.append(float(t))
                archives[b].observables.append(obs[b])
        if observer is not None:
            observer(t, alpha)

    record(t0)
    n = params.n_steps
    for k in range(1, n + 1):
        alpha = stepper.step(alpha)
        if k % params.snapshot_stride == 0 or k == n:
            if not np.all(np.isfinite(alpha)):
                _abort(alpha, t0 + k * params.dt, k)
            record(t0 + k * params.dt)
    return archives


def evolve(initial, params: EvolutionParams, quad: QuadratureTables,
           table: ModeTable, rng: Optional[np.random.Generator] = None,
           **kwargs) -> TrajectoryArchive:
    """Evolve one trajectory and archive snapshots every ``snapshot_stride`` steps."""
    init = getattr(initial, "coeffs", initial)
    t0 = getattr(initial, "time", 0.0)
    rngs = [rng] if rng is not None else []
    if rng is None and params.noise_on and params.Gamma * params.T_tilde > 0:
        raise ValueError("a generator is required when noise is on")
    return evolve_batch(np.asarray(init)[None], params, quad, table, rngs,
                        t0=t0, **kwargs)[0]
