"""Reference computations that share no code with the package.

Each oracle takes the slow, obvious route: closed-form special functions
from scipy/mpmath, brute-force quadrature and plain Monte Carlo.
"""

import math

import mpmath
import numpy as np
from scipy.special import eval_genlaguerre, gammaln, roots_legendre


def band_modes(Nbar, Omega_frac):
    """(n, l) pairs under the cutoff by exhaustive search, n-major, l ascending."""
    out = []
    for n in range(Nbar // 2 + 1):
        for l in range(-4 * Nbar - 10, int(Nbar / (1 - Omega_frac)) + 10):
            if 2 * n + abs(l) - Omega_frac * l <= Nbar + 1e-12:
                out.append((n, l))
    return out


def radial_mode(n, l, r):
    """Radial factor of the normalised Laguerre-Gaussian mode."""
    m = abs(l)
    r = np.asarray(r, float)
    x = r * r
    with np.errstate(divide="ignore"):
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), -np.inf)
    logpre = 0.5 * (gammaln(n + 1) - gammaln(n + m + 1) - math.log(math.pi))
    if m == 0:
        envelope = np.exp(logpre - x / 2)
    else:
        envelope = np.exp(logpre + m * logr - x / 2)
    return envelope * eval_genlaguerre(n, m, x)


def composite_legendre(a, b, panels, order):
    t, w = roots_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + h[:, None] * t[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


class DenseGrid:
    """Polar grid fine enough to integrate quartic products of band modes."""

    def __init__(self, modes, r_max=26.0, panels=104, order=16, n_theta=1024):
        self.modes = modes
        self.r, self.wr = composite_legendre(0.0, r_max, panels, order)
        self.theta = 2 * np.pi * np.arange(n_theta) / n_theta
        self.n_theta = n_theta
        ls = sorted({l for _, l in modes})
        self.ls = np.array(ls)
        self.l_pos = {l: i for i, l in enumerate(ls)}
        self.R = np.stack([radial_mode(n, l, self.r) for n, l in modes])  # (M, Nr)
        # angular harmonics by explicit exponentials
        self.E = np.exp(1j * np.outer(self.ls, self.theta))  # (L, Nt)

    def field(self, coeffs):
        """Field values, shape (batch, Nr, Nt)."""
        coeffs = np.atleast_2d(coeffs)
        radial = np.zeros((coeffs.shape[0], self.ls.size, self.r.size), complex)
        for k, (n, l) in enumerate(self.modes):
            radial[:, self.l_pos[l], :] += coeffs[:, k, None] * self.R[k][None, :]
        return np.matmul(radial.transpose(0, 2, 1), self.E)

    def project(self, values):
        """Inner products with every mode, shape (batch, M)."""
        dtheta = 2 * np.pi / self.n_theta
        ang = np.matmul(values, self.E.conj().T).transpose(0, 2, 1) * dtheta
        out = np.empty((values.shape[0], len(self.modes)), complex)
        for k, (n, l) in enumerate(self.modes):
            out[:, k] = ang[:, self.l_pos[l], :] @ (self.wr * self.r * self.R[k])
        return out

    def nonlinear(self, coeffs):
        psi = self.field(coeffs)
        return self.project(np.abs(psi) ** 2 * psi)

    def quartic(self, coeffs):
        psi = self.field(coeffs)
        dtheta = 2 * np.pi / self.n_theta
        return np.einsum("brt,r->b", np.abs(psi) ** 4, self.wr * self.r) * dtheta


def direct_polylog(nu, z, tol=1e-17):
    """Plain series sum_k z^k / k^nu with compensated summation."""
    terms = []
    k = 1
    while True:
        t = z ** k / k ** nu
        terms.append(t)
        if t < tol * terms[0] and k > 5:
            break
        k += 1
    return math.fsum(terms)


def incomplete_bose_mp(nu, z, y, dps=30):
    """sum_l z^l Gamma(nu, l y) / (Gamma(nu) l^nu) at high precision."""
    with mpmath.workdps(dps):
        nu, z, y = mpmath.mpf(nu), mpmath.mpf(z), mpmath.mpf(y)
        f = lambda l: z ** l * mpmath.gammainc(nu, l * y, regularized=True) / l ** nu
        return float(mpmath.nsum(f, [1, mpmath.inf]))


def phase_space_moments(T, mu, E_R, omega_perp, omega_z, Omega, mass, n, seed=0):
    """Monte Carlo N, <L_z>, <L_z^2> of the cut-off ideal Bose gas.

    Positions and kinetic momenta are drawn from the Boltzmann density of the
    rotating-frame Hamiltonian and reweighted to the Bose occupation above
    the cutoff.  Returns (N, sum L_z, sum L_z^2) with L_z in units of hbar.
    """
    hbar = 1.054571817e-34
    kB = 1.380649e-23
    kT = kB * T
    rng = np.random.default_rng(seed)
    sx = math.sqrt(kT / (mass * omega_perp ** 2))
    sz = math.sqrt(kT / (mass * omega_z ** 2))
    sp = math.sqrt(mass * kT)
    N = Lz = Lz2 = 0.0
    chunk = 1_000_000
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        x, y = rng.normal(0, sx, m), rng.normal(0, sx, m)
        z = rng.normal(0, sz, m)
        px, py, pz = rng.normal(0, sp, (3, m))
        H = ((px ** 2 + py ** 2 + pz ** 2) / (2 * mass)
             + 0.5 * mass * (omega_perp ** 2 * (x ** 2 + y ** 2) + omega_z ** 2 * z ** 2))
        b = H / kT
        occ = np.where(H > E_R, 1.0 / np.expm1(b - mu / kT), 0.0)
        wgt = occ * np.exp(b)
        # canonical angular momentum; kinetic momentum plus m Omega x r
        L = (x * py - y * px + mass * Omega * (x ** 2 + y ** 2)) / hbar
        N += wgt.sum()
        Lz += (wgt * L).sum()
        Lz2 += (wgt * L * L).sum()
    Z = (kT / (hbar * omega_perp)) ** 2 * (kT / (hbar * omega_z))
    return Z * N / n, Z * Lz / n, Z * Lz2 / n
