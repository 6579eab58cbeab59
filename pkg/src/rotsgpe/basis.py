"""Rotating-frame Laguerre-Gaussian basis and exact spectral transforms.

All quantities here are dimensionless: lengths in units of the radial
oscillator length r0, energies in units of hbar*omega_r and time in units of
1/omega_r.  The single particle modes are

    Y_nl(r, theta) = sqrt(n!/(pi (n+|l|)!)) e^{i l theta} r^|l| e^{-r^2/2} L_n^|l|(r^2)

with rotating-frame frequencies 2n + |l| - Omega_frac*l + 1.  The condensate
band keeps every mode with 2n + |l| - Omega_frac*l <= Nbar.

Two radial grids are used.  The *quartic* grid (nodes r^2 = x_k/2, weights
pi*w_k*exp(x_k)/2) integrates products of four band functions exactly and is
the grid on which the nonlinear term is evaluated.  The *linear* grid (nodes
r^2 = x_k, weights pi*w_k*exp(x_k)) integrates products of two band functions
exactly and is used to project arbitrary position-space functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import constants
from scipy import fft as sp_fft
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

HBAR = constants.hbar

# slack used when testing the cutoff inequality in floating point
_CUTOFF_EPS = 1e-12


@dataclass(frozen=True)
class TrapGeometry:
    """Cylindrical harmonic trap seen from a frame rotating at ``Omega``.

    Frequencies are angular frequencies in rad/s, ``mass`` is in kg.
    """

    omega_r: float
    omega_z: float
    Omega: float
    mass: float

    def __post_init__(self):
        if not self.omega_r > 0 or not self.omega_z > 0:
            raise ValueError("trap frequencies must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0 <= self.Omega < self.omega_r:
            raise ValueError(
                f"rotation must satisfy 0 <= Omega < omega_r, got "
                f"Omega/omega_r = {self.Omega / self.omega_r}")

    @property
    def r0(self) -> float:
        return math.sqrt(HBAR / (self.mass * self.omega_r))

    @property
    def Omega_frac(self) -> float:
        return self.Omega / self.omega_r

    @property
    def omega_perp(self) -> float:
        """Effective radial frequency sqrt(omega_r^2 - Omega^2)."""
        return math.sqrt(self.omega_r**2 - self.Omega**2)

    @property
    def eps000(self) -> float:
        """3D single particle ground state energy hbar*omega_r + hbar*omega_z/2 [J]."""
        return HBAR * self.omega_r + 0.5 * HBAR * self.omega_z

    def with_rotation(self, Omega: float) -> "TrapGeometry":
        return TrapGeometry(self.omega_r, self.omega_z, Omega, self.mass)


@dataclass(frozen=True)
class CutoffSpec:
    """Energy cutoff of the condensate band, E_R = hbar*omega_r*(Nbar + 1)."""

    Nbar: int

    def __post_init__(self):
        if int(self.Nbar) != self.Nbar or self.Nbar < 0:
            raise ValueError("Nbar must be a non-negative integer")

    @property
    def E_R_tilde(self) -> float:
        return float(self.Nbar + 1)

    def E_R(self, omega_r: float) -> float:
        return HBAR * omega_r * (self.Nbar + 1)


@dataclass(frozen=True)
class ModeIndex:
    n: int
    l: int


@dataclass
class FieldState:
    """Spectral coefficients alpha_nl of the condensate band field.

    ``coeffs`` follows the ordering of the :class:`ModeTable` it was built
    for; leading batch axes are allowed by the transforms.
    """

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("field coefficients must be finite")

    def copy(self) -> "FieldState":
        return FieldState(self.coeffs.copy(), self.time)


def mode_frequency(idx: ModeIndex, Omega_frac: float) -> float:
    """Rotating-frame frequency 2n + |l| - Omega_frac*l + 1 in units of omega_r."""
    return 2 * idx.n + abs(idx.l) - Omega_frac * idx.l + 1


def _l_bound(room: int, slope: float) -> int:
    # largest integer l >= 0 with l*slope <= room
    if slope <= 0:
        raise ValueError("Omega_frac >= 1 gives an unbounded angular range")
    l = int(math.floor(room / slope))
    while (l + 1) * slope <= room + _CUTOFF_EPS:
        l += 1
    while l > 0 and l * slope > room + _CUTOFF_EPS:
        l -= 1
    return l


class ModeTable:
    """All (n, l) modes beneath the cutoff, n-major with l ascending.

    The ordering is part of the checkpoint format and must not change.
    """

    def __init__(self, Nbar: int, Omega_frac: float):
        if not 0 <= Omega_frac < 1:
            raise ValueError(
                f"Omega_frac must lie in [0, 1), got {Omega_frac}")
        if int(Nbar) != Nbar or Nbar < 0:
            raise ValueError("Nbar must be a non-negative integer")
        self.Nbar = int(Nbar)
        self.Omega_frac = float(Omega_frac)
        n_max = self.Nbar // 2
        self.l_plus = np.array(
            [_l_bound(self.Nbar - 2 * n, 1 - self.Omega_frac)
             for n in range(n_max + 1)])
        self.l_minus = np.array(
            [_l_bound(self.Nbar - 2 * n, 1 + self.Omega_frac)
             for n in range(n_max + 1)])
        n_list, l_list = [], []
        for n in range(n_max + 1):
            ls = np.arange(-self.l_minus[n], self.l_plus[n] + 1)
            n_list.append(np.full(ls.size, n))
            l_list.append(ls)
        self.n = np.concatenate(n_list)
        self.l = np.concatenate(l_list)
        self.freqs = (2 * self.n + np.abs(self.l)
                      - self.Omega_frac * self.l + 1).astype(float)

    @property
    def lbar_plus(self) -> int:
        return int(self.l_plus[0])

    @property
    def lbar_minus(self) -> int:
        return int(self.l_minus[0])

    @property
    def modes(self) -> list[ModeIndex]:
        return [ModeIndex(int(n), int(l)) for n, l in zip(self.n, self.l)]

    def __len__(self) -> int:
        return self.n.size

    def index(self, n: int, l: int) -> int:
        hit = np.flatnonzero((self.n == n) & (self.l == l))
        if hit.size == 0:
            raise KeyError(f"mode (n={n}, l={l}) is outside the cutoff")
        return int(hit[0])

    def to_csv(self) -> str:
        rows = ["n,l,omega_R"]
        rows += [f"{n},{l},{w!r}" for n, l, w in zip(self.n, self.l, self.freqs)]
        return "\n".join(rows) + "\n"

    def __repr__(self):
        return (f"ModeTable(Nbar={self.Nbar}, Omega_frac={self.Omega_frac}, "
                f"modes={len(self)})")


def enumerate_modes(trap, cutoff) -> ModeTable:
    """Enumerate the condensate band.

    ``trap`` is a :class:`TrapGeometry` or the bare rotation fraction
    Omega/omega_r; ``cutoff`` is a :class:`CutoffSpec` or the integer Nbar.
    """
    Omega_frac = trap.Omega_frac if isinstance(trap, TrapGeometry) else float(trap)
    Nbar = cutoff.Nbar if isinstance(cutoff, CutoffSpec) else cutoff
    return ModeTable(Nbar, Omega_frac)


# --------------------------------------------------------------------------
# Gauss-Laguerre rule

def _laguerre_scaled(N: int, x: np.ndarray):
    """Return L_N(x) and L_N(x) - L_{N-1}(x), both times exp(-x/2).

    The recurrence is run on the differences d_k = L_k - L_{k-1}, which are
    O(x) near the origin, so the smallest roots keep full relative accuracy.
    A running log scale keeps large arguments from under/overflowing.
    """
    x = np.asarray(x, dtype=float)
    L = np.ones_like(x)
    d = np.zeros_like(x)
    logscale = -x / 2
    for k in range(N):
        d = (k * d - x * L) / (k + 1)
        L = L + d
        big = np.abs(L) > 1e150
        if np.any(big):
            L[big] *= 1e-150
            d[big] *= 1e-150
            logscale[big] += 150 * np.log(10.0)
    factor = np.exp(logscale)
    return L * factor, d * factor


def gauss_laguerre(N: int, maxiter: int = 50):
    """Nodes and scaled weights of the N-point Gauss-Laguerre rule.

    Returns ``(x, w_scaled)`` with ``w_scaled[k] = w_k * exp(x_k)``; the bare
    weights underflow for large N.  Initial nodes are the eigenvalues of the
    Jacobi matrix, refined by Newton iteration on the three-term recurrence.
    Weights come from w_k = 1/(x_k L_N'(x_k)^2).
    """
    if N < 1:
        raise ValueError("rule order must be >= 1")
    k = np.arange(N)
    x = eigh_tridiagonal(2.0 * k + 1, k[1:].astype(float),
                         eigvals_only=True)
    converged = False
    for _ in range(maxiter):
        LN, dN = _laguerre_scaled(N, x)
        step = x * LN / (N * dN)
        x = x - step
        if converged:
            break
        converged = bool(np.all(np.abs(step) <= 1e-14 * x))
    if not converged:
        raise RuntimeError(f"Laguerre root refinement did not converge (N={N})")
    _, dN = _laguerre_scaled(N, x)
    w_scaled = x / (N * dN) ** 2
    return x, w_scaled


def laguerre_functions(x, l_abs: int, n_max: int) -> np.ndarray:
    """Radial mode functions Phi_{n,|l|}(x) for n = 0..n_max.

    Phi_{nm}(x) = sqrt(n!/(pi (n+m)!)) x^{m/2} exp(-x/2) L_n^m(x) so that
    Y_nl(r, theta) = Phi_{n|l|}(r^2) e^{i l theta}.  The prefactor is formed
    in log space and the polynomial part by an upward recurrence on the
    normalised associated Laguerre polynomials, which stays finite for the
    large |l| of the rotating band.  Returns shape ``x.shape + (n_max+1,)``.
    """
    x = np.asarray(x, dtype=float)
    m = int(l_abs)
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    if m == 0:
        logbase = -x / 2
    else:
        logbase = 0.5 * m * logx - x / 2
    logbase = logbase - 0.5 * math.log(math.pi) - 0.5 * gammaln(m + 1)
    base = np.exp(logbase)
    out = np.empty(x.shape + (n_max + 1,))
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    out[..., 0] = h
    for n in range(n_max):
        h_prev, h = h, (((2 * n + 1 + m - x) * h - math.sqrt(n * (n + m)) * h_prev)
                        / math.sqrt((n + 1) * (n + m + 1)))
        out[..., n + 1] = h
    return out * base[..., None]


def mode_values(table: ModeTable, r, theta) -> np.ndarray:
    """Y_nl(r, theta) for every mode; shape ``broadcast(r, theta).shape + (M,)``."""
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    x = r**2
    n_max = table.Nbar // 2
    out = np.empty(r.shape + (len(table),), dtype=complex)
    for m in np.unique(np.abs(table.l)):
        phi = laguerre_functions(x, m, n_max)
        for k in np.flatnonzero(np.abs(table.l) == m):
            out[..., k] = phi[..., table.n[k]] * np.exp(1j * table.l[k] * theta)
    return out


def evaluate(field, table: ModeTable, r, theta) -> np.ndarray:
    """Direct mode summation of alpha(r, theta) = sum_nl alpha_nl Y_nl."""
    coeffs = _coeffs(field)
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    n_max = table.Nbar // 2
    out = np.zeros(r.shape, dtype=complex)
    x = r**2
    abs_l = np.abs(table.l)
    for m in np.unique(abs_l):
        phi = laguerre_functions(x, m, n_max)
        for l in {int(m), -int(m)}:
            sel = np.flatnonzero(table.l == l)
            if sel.size:
                radial = phi[..., table.n[sel]] @ coeffs[sel]
                out += radial * np.exp(1j * l * theta)
    return out


def _coeffs(field) -> np.ndarray:
    return np.asarray(getattr(field, "coeffs", field), dtype=complex)


# --------------------------------------------------------------------------
# Quadrature tables and transforms

@dataclass(eq=False)
class QuadratureTables:
    """Grids and precomputed mode values for the mixed spectral method.

    ``P[m]`` is the ``N_x x (n_max(m)+1)`` matrix Phi_{n,m}(x_k/2) for the
    angular number |l| = m.  The dense arrays prefixed with an underscore are
    layouts of the same data used by the vectorised transforms.
    """

    table: ModeTable
    N_x: int
    x: np.ndarray
    w: np.ndarray
    wtilde: np.ndarray
    N_theta: int
    theta: np.ndarray
    P: dict = field(repr=False)
    l_values: np.ndarray = field(repr=False)
    _l_idx: np.ndarray = field(repr=False)
    _P_nlk: np.ndarray = field(repr=False)
    _P_lin_nlk: np.ndarray = field(repr=False)
    _P_pinv_nlk: np.ndarray = field(repr=False)
    _w_lin: np.ndarray = field(repr=False)
    _bins: np.ndarray = field(repr=False)

    @property
    def n_width(self) -> int:
        return self.table.Nbar // 2 + 1

    @property
    def grid_r(self) -> np.ndarray:
        """Radii sqrt(x_k/2) of the quartic grid."""
        return np.sqrt(self.x / 2)

    @property
    def linear_r(self) -> np.ndarray:
        """Radii sqrt(x_k) of the linear (projection) grid."""
        return np.sqrt(self.x)

    # dense <-> mode-ordered layouts
    def to_dense(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-1] != len(self.table):
            raise ValueError(
                f"coefficient vector has length {coeffs.shape[-1]}, "
                f"mode table has {len(self.table)} modes")
        dense = np.zeros(coeffs.shape[:-1] + (self.l_values.size, self.n_width),
                         dtype=complex)
        dense[..., self._l_idx, self.table.n] = coeffs
        return dense

    def from_dense(self, dense: np.ndarray) -> np.ndarray:
        return dense[..., self._l_idx, self.table.n]


def build_quadrature(table: ModeTable, n_theta: int | None = None) -> QuadratureTables:
    """Build the grids for ``table``.

    ``n_theta`` may raise the angular grid above the exact minimum
    2*(lbar_minus + lbar_plus) + 1 (e.g. to a faster FFT length); it may
    never go below it.
    """
    if len(table) == 0:
        raise ValueError("empty mode table")
    N_x = _l_bound(table.Nbar, 1 - table.Omega_frac) + 1
    x, w_scaled = gauss_laguerre(N_x)
    with np.errstate(under="ignore"):
        w = w_scaled * np.exp(-x)
    wtilde = np.pi * w_scaled / 2
    N_theta_min = 2 * (table.lbar_minus + table.lbar_plus) + 1
    if n_theta is None:
        n_theta = N_theta_min
    if n_theta < N_theta_min:
        raise ValueError(
            f"n_theta={n_theta} is below the exact bound {N_theta_min}")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta

    n_width = table.Nbar // 2 + 1
    l_values = np.arange(-table.lbar_minus, table.lbar_plus + 1)
    l_idx = table.l + table.lbar_minus
    P = {}
    P_dense = np.zeros((l_values.size, N_x, n_width))
    P_lin = np.zeros((l_values.size, N_x, n_width))
    P_pinv = np.zeros((l_values.size, n_width, N_x))
    lin_cache = {}
    for i, l in enumerate(l_values):
        m = abs(int(l))
        n_count = int(np.max(table.n[table.l == l])) + 1
        if m not in P:
            full = laguerre_functions(x / 2, m, n_width - 1)
            lin_cache[m] = laguerre_functions(x, m, n_width - 1)
            P[m] = full[:, :_max_n_for_abs(table, m) + 1]
        P_dense[i, :, :n_count] = P[m][:, :n_count]
        P_lin[i, :, :n_count] = lin_cache[m][:, :n_count]
        P_pinv[i, :n_count, :] = np.linalg.pinv(P[m][:, :n_count])
    return QuadratureTables(
        table=table, N_x=N_x, x=x, w=w, wtilde=wtilde, N_theta=n_theta,
        theta=theta, P=P, l_values=l_values, _l_idx=l_idx,
        _P_nlk=np.ascontiguousarray(P_dense.transpose(2, 0, 1)),
        _P_lin_nlk=np.ascontiguousarray(P_lin.transpose(2, 0, 1)),
        _P_pinv_nlk=np.ascontiguousarray(P_pinv.transpose(1, 0, 2)), _w_lin=np.pi * w_scaled,
        _bins=np.mod(l_values, n_theta))


def _max_n_for_abs(table: ModeTable, m: int) -> int:
    return int(np.max(table.n[np.abs(table.l) == m]))


def _radial_synthesis(quad: QuadratureTables, dense: np.ndarray) -> np.ndarray:
    # chi[..., l, k] = sum_n P[l, k, n] alpha[..., l, n]; n_width is tiny
    Pn = quad._P_nlk
    chi = Pn[0] * dense[..., 0, None]
    for n in range(1, Pn.shape[0]):
        chi = chi + Pn[n] * dense[..., n, None]
    return chi


def _radial_analysis(quad: QuadratureTables, spec: np.ndarray,
                     Pn: np.ndarray) -> np.ndarray:
    # dense[..., l, n] = sum_k Pn[n, l, k] spec[..., l, k]
    out = np.empty(spec.shape[:-1] + (Pn.shape[0],), dtype=complex)
    for n in range(Pn.shape[0]):
        out[..., n] = np.einsum("lk,...lk->...l", Pn[n], spec)
    return out


def _synthesis_tk(quad: QuadratureTables, coeffs: np.ndarray) -> np.ndarray:
    # field values laid out as (..., N_theta, N_x)
    chi = _radial_synthesis(quad, quad.to_dense(coeffs))
    padded = np.zeros(chi.shape[:-2] + (quad.N_theta, quad.N_x), dtype=complex)
    padded[..., quad._bins, :] = chi
    return sp_fft.ifft(padded, axis=-2, norm="forward", overwrite_x=True)


def _analysis_tk(quad: QuadratureTables, values_tk: np.ndarray) -> np.ndarray:
    # (1/N_theta) sum_j values e^{-i l theta_j}, gathered on the band's l
    spec = sp_fft.fft(values_tk, axis=-2, norm="forward")
    return spec[..., quad._bins, :]


def to_position(field, quad: QuadratureTables) -> np.ndarray:
    """Field values Psi_kj at (sqrt(x_k/2), theta_j); shape ``(..., N_x, N_theta)``.

    The returned array is a transposed view of a theta-major buffer.
    """
    return np.swapaxes(_synthesis_tk(quad, _coeffs(field)), -1, -2)


def _cubic(psi: np.ndarray) -> np.ndarray:
    xi = psi * psi.conj()
    xi *= psi
    return xi


def nonlinear_from_position(psi: np.ndarray, quad: QuadratureTables) -> np.ndarray:
    """Projected |Psi|^2 Psi from quartic-grid values ``psi`` of shape (..., N_x, N_theta)."""
    xi_tk = _cubic(np.swapaxes(psi, -1, -2))
    spec = _analysis_tk(quad, xi_tk) * quad.wtilde
    return quad.from_dense(_radial_analysis(quad, spec, quad._P_nlk))


def nonlinear_term(field, quad: QuadratureTables) -> np.ndarray:
    """F_nl = integral of Y_nl^* |alpha|^2 alpha over the plane.

    Exact for any field in the band: the quartic grid integrates the
    degree-2*floor(Nbar/(1-Omega_frac)) radial polynomial and the
    angular harmonics up to 2*(lbar_minus + lbar_plus) without aliasing.
    Leading axes of ``field`` are treated as a batch.
    """
    xi_tk = _cubic(_synthesis_tk(quad, _coeffs(field)))
    spec = _analysis_tk(quad, xi_tk) * quad.wtilde
    return quad.from_dense(_radial_analysis(quad, spec, quad._P_nlk))


def quartic_integral(psi: np.ndarray, quad: QuadratureTables) -> np.ndarray:
    """Integral of |Psi|^4 over the plane from quartic-grid values."""
    dens2 = (psi.real**2 + psi.imag**2) ** 2
    return np.einsum("k,...k->...", quad.wtilde, dens2.mean(axis=-1))


def project(samples, quad: QuadratureTables) -> FieldState:
    """Project a position-space field onto the condensate band.

    ``samples`` is either a callable ``f(r, theta)`` returning complex values,
    or an array of values on the quartic grid as returned by
    :func:`to_position`.  A callable is integrated against Y_nl^* on the
    linear grid, which is exact whenever f times a band mode is a
    Gaussian-weighted polynomial of degree < 2*N_x.  Grid values are analysed
    by FFT in angle and fitted radially per l, which recovers any band-limited
    field exactly.
    """
    if callable(samples):
        r = np.sqrt(quad.x)[None, :]
        values = np.asarray(samples(r, quad.theta[:, None]), dtype=complex)
        values = np.broadcast_to(values, (quad.N_theta, quad.N_x))
        spec = _analysis_tk(quad, values) * quad._w_lin
        dense = _radial_analysis(quad, spec, quad._P_lin_nlk)
    else:
        values = np.asarray(samples, dtype=complex)
        if values.shape[-2:] != (quad.N_x, quad.N_theta):
            raise ValueError(
                f"grid values have shape {values.shape[-2:]}, expected "
                f"{(quad.N_x, quad.N_theta)}")
        spec = _analysis_tk(quad, np.swapaxes(values, -1, -2))
        dense = _radial_analysis(quad, spec, quad._P_pinv_nlk)
    return FieldState(quad.from_dense(dense))


def band_mask(table: ModeTable, n: int, l: int) -> bool:
    """True if (n, l) satisfies the cutoff inequality of ``table``."""
    return (2 * n + abs(l) - table.Omega_frac * l) <= table.Nbar + _CUTOFF_EPS


def single_mode(table: ModeTable, n: int, l: int, amplitude: complex = 1.0) -> FieldState:
    coeffs = np.zeros(len(table), dtype=complex)
    coeffs[table.index(n, l)] = amplitude
    return FieldState(coeffs)


def mode_function(n: int, l: int) -> Callable:
    """Y_nl as a callable of (r, theta), valid for modes outside any band."""
    def f(r, theta):
        x = np.asarray(r, float) ** 2
        return laguerre_functions(x, abs(l), n)[..., n] * np.exp(1j * l * np.asarray(theta))
    return f
