"""Ideal-gas physics of the non-condensate band.

Everything here is in SI units.  The reservoir is a rotating ideal Bose gas
in the effective potential ``V_eff = m (omega_r^2 - Omega^2) rho^2 / 2 +
m omega_z^2 z^2 / 2`` with occupied states restricted to single-particle
energies above the cutoff ``E_R``.

The growth rates share the prefactor ``C = 4 m (a k_B T)^2 / (pi hbar^3)``.
In the reduced variables ``a = beta (E_R - V)``, ``b = beta V`` and
``d = beta (V - mu)``::

    G1(V) = C int_a^inf de f(e) * (-log(1 - exp(-(max(a, b^2/4e) + d))))
    G2(V) = C int int_{e1, e2 >= a, 4 e1 e2 >= b^2}
                 f(e1) f(e2) / (exp(e1 + e2 + 2b - beta mu) - 1)

with ``f(e) = 1 / (exp(e + d) - 1)``.  The inner region ``V <= 2 E_R / 3``
makes the constraint ``4 e1 e2 >= b^2`` inactive, which gives the closed
forms in :func:`growth_rates_inner`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants, integrate
from scipy.special import gammaincc, gammaln, hyperu, kve

from .basis import TrapGeometry

HBAR = constants.hbar
KB = constants.k

_CHUNK = 256
_DIRECT_TERMS = 100_000


@dataclass(frozen=True)
class ReservoirSpec:
    """Non-condensate band: temperature [K], chemical potential [J],
    rotation [rad/s] and cutoff energy [J]."""

    T: float
    mu: float
    Omega: float
    E_R: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        if not (self.mu < self.E_R or self.mu == self.E_R == 0):
            raise ValueError("mu must lie below the cutoff energy E_R")

    @property
    def beta(self) -> float:
        return 1.0 / (KB * self.T)

    @property
    def kT(self) -> float:
        return KB * self.T


@dataclass(frozen=True)
class RateSet:
    G1_in: float
    G2_in: float
    G1_out: float
    G2_out: float
    M_amp: float

    @property
    def gamma(self) -> float:
        return self.G1_in + self.G2_in

    def dimensionless_gamma(self, T: float) -> float:
        """hbar * gamma / (k_B T)."""
        return HBAR * self.gamma / (KB * T)


# --------------------------------------------------------------------------
# incomplete Bose-Einstein function

def _scaled_q(nu: float, x: np.ndarray) -> np.ndarray:
    # Q(nu, x) * exp(x): regularised upper incomplete gamma without underflow
    out = np.empty_like(x)
    small = x < 30
    xs = x[small]
    out[small] = gammaincc(nu, xs) * np.exp(xs)
    xl = x[~small]
    # Gamma(nu, x) = exp(-x) U(1 - nu, 1 - nu, x)
    out[~small] = hyperu(1 - nu, 1 - nu, xl) * math.exp(-gammaln(nu))
    return out


def _log_terms(nu, logz, y, l):
    # log of z^l Q(nu, y l) l^-nu, with Q's exp(-y l) folded into the exponent
    yl = y[:, None] * l[None, :]
    q = _scaled_q(nu, yl.ravel()).reshape(yl.shape)
    with np.errstate(divide="ignore"):
        return l * (logz[:, None] - y[:, None]) + np.log(q) - nu * np.log(l)


def _em_tail(nu: float, logz: float, y: float, L: int) -> float:
    """Euler-Maclaurin estimate of sum_{l >= L} of the series terms."""
    lg = math.lgamma(nu)

    def f(t):
        return math.exp(t * logz - nu * math.log(t)) * float(
            gammaincc(nu, y * t))

    def fprime(t):
        base = f(t) * (logz - nu / t)
        if y > 0:
            base -= math.exp(t * logz - nu * math.log(t) + (nu - 1) * math.log(y * t)
                             - y * t - lg) * y
        return base

    # t = L / u maps [L, inf) onto (0, 1]
    def g(u):
        return f(L / u) * L / u ** 2 if u > 0 else 0.0

    tail_int, _ = integrate.quad(g, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=400)
    return tail_int + f(L) / 2 - fprime(L) / 12


def incomplete_bose(nu: float, z, y, rtol: float = 1e-12):
    """g_nu(z, y) = sum_l z^l Gamma(nu, y l) / Gamma(nu) / l^nu.

    Converges for ``z * exp(-y) < 1``, or ``z * exp(-y) = 1`` with ``y = 0``
    and ``nu > 1``.  ``z`` may exceed one when ``y > 0``.  Array arguments
    broadcast.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
    shape = z.shape
    z = z.ravel()
    y = y.ravel()
    if np.any(z <= 0) or np.any(y < 0):
        raise ValueError("need z > 0 and y >= 0")
    logz = np.log(z)
    rate = logz - y
    if np.any(rate > 0) or np.any((rate == 0) & ((y > 0) | (nu <= 1))):
        raise ValueError("incomplete Bose series diverges: need z*exp(-y) < 1")

    total = np.zeros(z.size)
    active = np.ones(z.size, dtype=bool)
    start = 1
    while np.any(active) and start <= _DIRECT_TERMS:
        idx = np.flatnonzero(active)
        l = np.arange(start, start + _CHUNK, dtype=float)
        terms = np.exp(_log_terms(nu, logz[idx], y[idx], l))
        total[idx] += terms.sum(axis=1)
        # consecutive terms shrink at least by exp(rate) * (l/(l+1))^(nu-1)...
        q = np.exp(rate[idx])
        last = terms[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = np.where(q < 1, last * q / (1 - q), np.inf)
        done = bound <= rtol * np.abs(total[idx]) * 0.1
        active[idx[done]] = False
        start += _CHUNK
    for i in np.flatnonzero(active):
        total[i] += _em_tail(nu, logz[i], y[i], start)
    out = total.reshape(shape)
    return out if shape else float(out)


def bose_function(nu: float, z):
    """Ordinary Bose-Einstein function g_nu(z) = Li_nu(z)."""
    return incomplete_bose(nu, z, 0.0)


# --------------------------------------------------------------------------
# thermodynamics

def effective_potential(pos, trap: TrapGeometry) -> np.ndarray:
    """V_eff at Cartesian positions ``pos[..., 3]`` [m] in the rotating frame."""
    pos = np.asarray(pos, float)
    rho2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
    return 0.5 * trap.mass * (trap.omega_perp ** 2 * rho2
                              + trap.omega_z ** 2 * pos[..., 2] ** 2)


def transition_temperature(N: float, trap: TrapGeometry) -> float:
    """Ideal-gas transition temperature [K] of N atoms in the rotating trap."""
    if N < 1:
        raise ValueError("N must be >= 1")
    T0 = 0.94 * HBAR * (trap.omega_r ** 2 * trap.omega_z) ** (1 / 3) * N ** (1 / 3) / KB
    return T0 * (1 - trap.Omega_frac ** 2) ** (1 / 3)


def thermal_wavelength(T: float, mass: float) -> float:
    return math.sqrt(2 * math.pi * HBAR ** 2 / (mass * KB * T))


def noncondensate_density(pos, spec: ReservoirSpec, trap: TrapGeometry):
    """Semiclassical density [1/m^3] of atoms above the cutoff."""
    V = effective_potential(pos, trap)
    b = spec.beta
    z = np.exp(b * (spec.mu - V))
    y = b * np.maximum(spec.E_R - V, 0.0)
    with np.errstate(under="ignore"):
        out = np.zeros(np.shape(V))
        ok = z > 1e-300
        if np.any(ok):
            out[ok] = incomplete_bose(1.5, z[ok], y[ok])
    return out / thermal_wavelength(spec.T, trap.mass) ** 3


def _moment_args(spec: ReservoirSpec):
    return math.exp(spec.beta * spec.mu), spec.beta * spec.E_R


def noncondensate_number(spec: ReservoirSpec, trap: TrapGeometry) -> float:
    """Total atom number above the cutoff."""
    w_bar = (trap.omega_z * trap.omega_perp ** 2) ** (1 / 3)
    return incomplete_bose(3, *_moment_args(spec)) / (spec.beta * HBAR * w_bar) ** 3


def angular_momentum_moments(spec: ReservoirSpec, trap: TrapGeometry):
    """Return ``(<L_z>/N_NC, sigma(L_z))`` in units of hbar.

    Both diverge as Omega approaches omega_r.
    """
    w_perp = trap.omega_perp
    bh = spec.beta * HBAR
    z, y = _moment_args(spec)
    w1 = (trap.omega_z * w_perp ** 3) ** 0.25
    w2 = (trap.omega_z * w_perp ** 4) ** 0.2
    Lz = 2 * (spec.Omega / w_perp) * incomplete_bose(4, z, y) / (bh * w1) ** 4
    Lz2 = (2 * incomplete_bose(5, z, y) / (bh * w2) ** 5
           * (1 + 4 * spec.Omega ** 2 / w_perp ** 2))
    N = noncondensate_number(spec, trap)
    mean = Lz / N
    return mean, math.sqrt(max(Lz2 / N - mean ** 2, 0.0))


# --------------------------------------------------------------------------
# growth and scattering rates

def rate_prefactor(spec: ReservoirSpec, mass: float, a_s: float) -> float:
    """4 m (a k_B T)^2 / (pi hbar^3) [1/s]."""
    return 4 * mass * (a_s * spec.kT) ** 2 / (math.pi * HBAR ** 3)


def _lerch_sums(x: float, R: int) -> np.ndarray:
    # A_r = sum_{p>=1} x^p / (p + r) for r = 0..R; A_r = x * Phi(x, 1, r + 1)
    A = np.empty(R + 1)
    n_terms = int(math.ceil(42.0 / -math.log(x))) + 10
    p = np.arange(1, n_terms + 1, dtype=float)
    A[R] = np.sum(x ** p / (p + R))
    for r in range(R, 0, -1):
        # A_{r-1} = x / r + x A_r; stable downward
        A[r - 1] = x / r + x * A[r]
    return A


def growth_rates_inner(spec: ReservoirSpec, mass: float, a_s: float):
    """Spatially uniform growth rates ``(G1_in, G2_in)`` [1/s]."""
    if not spec.mu < spec.E_R:
        raise ValueError("growth rates diverge for mu >= E_R")
    C = rate_prefactor(spec, mass, a_s)
    b = spec.beta
    x = math.exp(b * (spec.mu - spec.E_R))
    G1 = C * math.log1p(-x) ** 2
    # sum_r exp(r beta (mu - 2 E_R)) A_r^2; A_r ~ x/((1-x) r) for large r
    ratio = math.exp(b * (spec.mu - 2 * spec.E_R))
    if ratio < 1:
        R = int(min(max(np.ceil(-np.log(1e-17) / -np.log(ratio)), 8), 100_000))
    else:
        raise ValueError("G2 series diverges for mu >= 2 E_R")
    A = _lerch_sums(x, R)
    r = np.arange(1, R + 1)
    G2 = C * float(np.sum(ratio ** r * A[1:] ** 2))
    return G1, G2


def _g1_general_reduced(a: float, b: float, d: float) -> float:
    # int_a^inf f(e) (-log(1 - exp(-(max(a, b^2/4e) + d)))) de
    def integrand(e):
        m = max(a, b * b / (4 * e)) if e > 0 else np.inf
        if e + d > 700 or m + d > 700:
            return 0.0
        return -math.log1p(-math.exp(-(m + d))) / math.expm1(e + d)

    lo = max(a, 1e-300)
    edges = [lo]
    if b > 0:
        # the max switches branch where b^2/4e = a, and peaks near e ~ b/2
        for e in (b * b / (4 * a) if a > 0 else None, b / 2):
            if e is not None and e > edges[-1]:
                edges.append(e)
    # integrand decays at least like exp(-(e + d)); 50 e-folds past the last
    # feature leaves a relative remainder below 1e-20
    edges.append(edges[-1] + 50.0 + max(-d, 0.0))
    val = 0.0
    for e0, e1 in zip(edges[:-1], edges[1:]):
        val += integrate.quad(integrand, e0, e1, epsabs=0, epsrel=1e-13,
                              limit=400)[0]
    return val


def g1_general(V, spec: ReservoirSpec, mass: float, a_s: float):
    """G1 [1/s] at effective potential ``V`` [J] from the resummed integral."""
    C = rate_prefactor(spec, mass, a_s)
    bt = spec.beta
    V = np.atleast_1d(np.asarray(V, float))
    out = np.array([
        C * _g1_general_reduced(bt * max(spec.E_R - v, 0.0), bt * v,
                                bt * (v - spec.mu)) for v in V])
    return out


def growth_rate_profile(Q, spec: ReservoirSpec, trap: TrapGeometry, a_s: float):
    """G1 along the radius ``Q`` [m] of the effective potential.

    Returns ``(G1, region)`` with region 0 inside ``V_eff <= 2 E_R/3`` where
    the rate is exactly ``G1_in``, 1 between that and the band edge, and 2
    beyond the band edge.
    """
    Q = np.asarray(Q, float)
    V = 0.5 * trap.mass * trap.omega_perp ** 2 * Q ** 2
    inner = V <= 2 * spec.E_R / 3
    region = np.where(inner, 0, np.where(V <= spec.E_R, 1, 2))
    G1_in, _ = growth_rates_inner(spec, trap.mass, a_s)
    G = np.full(Q.shape, G1_in)
    if np.any(~inner):
        G[~inner] = g1_general(V[~inner], spec, trap.mass, a_s)
    return G, region


def _bessel_double_sum(x: float, b: float, shift: float) -> float:
    # sum_{P,Q>=1} x^{P+Q} w(P,Q) K1(b sqrt(PQ)) / sqrt(PQ), w from the r sum
    n = 1
    while x ** n * math.exp(-b * math.sqrt(n)) > 1e-20 and n < 20_000:
        n *= 2
    P = np.arange(1, n + 1, dtype=float)
    s = np.sqrt(np.outer(P, P))
    with np.errstate(under="ignore"):
        logx = math.log(x)
        M = np.exp(logx * (P[:, None] + P[None, :]) - b * s) * kve(1, b * s) / s
    if shift is None:
        return float(M.sum())
    # suffix sums S_r = sum_{P,Q >= r+1} M_PQ; weights exp(shift * r)
    S = M[::-1, ::-1].cumsum(0).cumsum(1)[::-1, ::-1]
    diag = np.diagonal(S)[1:]
    r = np.arange(1, diag.size + 1)
    return float(np.sum(np.exp(shift * r) * diag))


def growth_rates_outer(spec: ReservoirSpec, mass: float, a_s: float):
    """Growth rates ``(G1_out, G2_out)`` [1/s] at the band edge V_eff = E_R."""
    C = rate_prefactor(spec, mass, a_s)
    bt = spec.beta
    b = bt * spec.E_R
    x = math.exp(bt * (spec.mu - spec.E_R))
    G1 = C * b * _bessel_double_sum(x, b, None)
    G2 = C * b * _bessel_double_sum(x, b, -bt * spec.mu)
    return G1, G2


def scattering_amplitude(spec: ReservoirSpec, a_s: float) -> float:
    """Scalar scattering amplitude [m^2/s].

    Multiplies the kernel 1/((2 pi)^3 |k|) in momentum space.
    """
    X = spec.beta * (spec.E_R - spec.mu)
    return 16 * math.pi * a_s ** 2 * spec.kT / HBAR / (4 * math.sinh(X / 2) ** 2)


def compute_rates(spec: ReservoirSpec, mass: float, a_s: float) -> RateSet:
    G1_in, G2_in = growth_rates_inner(spec, mass, a_s)
    G1_out, G2_out = growth_rates_outer(spec, mass, a_s)
    return RateSet(G1_in, G2_in, G1_out, G2_out,
                   scattering_amplitude(spec, a_s))


def thermo_row(trap: TrapGeometry, N: float) -> dict:
    """Transition temperature and angular-momentum moments at T = T_C.

    Uses the uncut ideal gas at criticality (E_R = 0, mu = 0).
    """
    Tc = transition_temperature(N, trap)
    spec = ReservoirSpec(T=Tc, mu=0.0, Omega=trap.Omega, E_R=0.0) if Tc > 0 else None
    if spec is None:
        return dict(Omega_frac=trap.Omega_frac, T_C=0.0, N_NC=math.nan,
                    Lz_per_N=math.inf, sigma_Lz=math.inf)
    Lz, sig = angular_momentum_moments(spec, trap)
    return dict(Omega_frac=trap.Omega_frac, T_C=Tc,
                N_NC=noncondensate_number(spec, trap), Lz_per_N=Lz,
                sigma_Lz=sig)
