"""Observables extracted from trajectories.

Lengths are in units of the radial oscillator length r0 and times in
1/omega_r, matching :mod:`rotsgpe.dynamics`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks
from scipy.spatial.distance import pdist

from .basis import FieldState, ModeTable, evaluate
from .dynamics import TrajectoryArchive

TRAP_PERIOD = 2 * math.pi


@dataclass
class CondensateResult:
    N0: float
    mode: FieldState
    spectrum: np.ndarray

    @property
    def scaled_mode(self) -> np.ndarray:
        """Condensate coefficients normalised to N0."""
        return self.mode.coeffs * math.sqrt(max(self.N0, 0.0))


@dataclass
class VortexSet:
    x: np.ndarray
    y: np.ndarray
    charge: np.ndarray
    filter_radius: float
    flagged: list = field(default_factory=list)

    def __len__(self):
        return int(self.x.size)

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def count(self, sign: int) -> int:
        return int(np.sum(np.sign(self.charge) == sign))

    @property
    def total_charge(self) -> int:
        return int(np.sum(self.charge))


@dataclass
class PairHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])


# --------------------------------------------------------------------------
# one-body density matrix

def onebody_matrix(coeffs, half_quantum: bool = True) -> np.ndarray:
    """<conj(alpha_i) alpha_j> over the rows of ``coeffs``, minus delta/2."""
    A = np.asarray(coeffs, dtype=complex)
    rho = A.conj().T @ A / A.shape[0]
    if half_quantum:
        rho -= 0.5 * np.eye(A.shape[1])
    return rho


def short_time_density_matrix(archive: TrajectoryArchive,
                              window: float = 2.5 * TRAP_PERIOD,
                              n_samples: int = 50,
                              t_end: Optional[float] = None,
                              half_quantum: bool = True) -> np.ndarray:
    """Time-averaged one-body matrix from one trajectory.

    Uses ``n_samples`` snapshots spread uniformly over ``[t_end - window,
    t_end]`` (default: the end of the archive).
    """
    times = np.asarray(archive.times)
    if times.size == 0:
        raise ValueError("empty archive")
    if t_end is None:
        t_end = times[-1]
    if n_samples == 1:
        targets = np.array([t_end])
    else:
        targets = np.linspace(t_end - window, t_end, n_samples)
    if targets[0] < times[0] - 1e-9 or t_end > times[-1] + 1e-9:
        raise ValueError("averaging window extends outside the archive")
    idx = np.abs(times[None, :] - targets[:, None]).argmin(axis=1)
    if np.unique(idx).size < n_samples:
        raise ValueError(
            f"only {np.unique(idx).size} distinct snapshots in the window; "
            f"{n_samples} requested")
    return onebody_matrix(np.asarray(archive.coeffs)[idx], half_quantum)


def penrose_onsager(rho: np.ndarray, tol: float = 1e-10) -> CondensateResult:
    """Dominant eigenpair of the one-body matrix.

    The condensate wavefunction has coefficients conj(v) for the top
    eigenvector v of ``rho_ij = <conj(alpha_i) alpha_j>``.
    """
    rho = np.asarray(rho)
    scale = max(1.0, float(np.max(np.abs(rho))))
    if np.max(np.abs(rho - rho.conj().T)) > tol * scale:
        raise ValueError("density matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    order = np.argsort(w)[::-1]
    w = w[order]
    top = v[:, order[0]].conj()
    # fix the global phase so the largest component is real and positive
    k = np.argmax(np.abs(top))
    top = top * np.exp(-1j * np.angle(top[k]))
    return CondensateResult(N0=float(w[0]), mode=FieldState(top), spectrum=w)


def condensate_band_number(archive: TrajectoryArchive, table: ModeTable,
                           half_quantum: bool = True,
                           t_range: Optional[tuple] = None) -> float:
    """Mean N_GP, less the Wigner half quantum per mode when requested."""
    obs = archive.observable_array()
    t = np.asarray(archive.times)
    sel = np.ones(t.size, bool) if t_range is None else (
        (t >= t_range[0]) & (t <= t_range[1]))
    N = float(np.mean(obs[sel, 0]))
    return N - 0.5 * len(table) if half_quantum else N


def condensate_fraction(result: CondensateResult, archive: TrajectoryArchive,
                        table: ModeTable, N_NC: float, half_quantum: bool = True,
                        t_range: Optional[tuple] = None) -> float:
    """N0 / (N_C + N_NC).

    ``N_NC`` is the reservoir population, e.g. from
    :func:`rotsgpe.reservoir.noncondensate_number`.
    """
    N_C = condensate_band_number(archive, table, half_quantum, t_range)
    return result.N0 / (N_C + N_NC)


def ideal_fraction(T, T_C):
    """Ideal-gas condensate fraction 1 - (T/T_C)^3, zero above T_C."""
    return np.clip(1 - (np.asarray(T, float) / T_C) ** 3, 0.0, 1.0)


# --------------------------------------------------------------------------
# position space

def density_grid(field, table: ModeTable, extent: float = 12.0, M: int = 256):
    """Field on the uniform grid ``[-extent, extent]^2``.

    Returns ``(axis, psi, density)`` with ``psi[j, i] = Psi(axis[i], axis[j])``.
    """
    axis = np.linspace(-extent, extent, M)
    X, Y = np.meshgrid(axis, axis, indexing="xy")
    psi = evaluate(field, table, np.hypot(X, Y), np.arctan2(Y, X))
    return axis, psi, psi.real ** 2 + psi.imag ** 2


def _wrap(d):
    return (d + np.pi) % (2 * np.pi) - np.pi


def _refine(c00, c10, c01, c11, iters: int = 20):
    # zero of the bilinear interpolant of (Re, Im) inside the unit cell
    u = v = 0.5
    for _ in range(iters):
        f = (c00 * (1 - u) * (1 - v) + c10 * u * (1 - v)
             + c01 * (1 - u) * v + c11 * u * v)
        fu = (c10 - c00) * (1 - v) + (c11 - c01) * v
        fv = (c01 - c00) * (1 - u) + (c11 - c10) * u
        J = np.array([[fu.real, fv.real], [fu.imag, fv.imag]])
        det = np.linalg.det(J)
        if abs(det) < 1e-300:
            return 0.5, 0.5
        du, dv = np.linalg.solve(J, [-f.real, -f.imag])
        u, v = u + du, v + dv
        if abs(du) + abs(dv) < 1e-12:
            break
    if not (0 <= u <= 1 and 0 <= v <= 1):
        return 0.5, 0.5
    return u, v


def detect_vortices(psi: np.ndarray, axis: np.ndarray,
                    filter_radius: float = 10.0) -> VortexSet:
    """Phase singularities of ``psi`` from 2x2 plaquette windings.

    Each cell's wrapped phase differences are summed counterclockwise; a
    total of +-2 pi marks a vortex of that sign.  Four wrapped differences
    cannot wind by 4 pi, so a multiply charged zero shows up as same-sign
    detections in neighbouring cells; such pairs closer than 1.5 cells are
    listed in ``flagged`` as ``(x, y, combined_charge)`` and still counted
    individually.  Positions are refined to the zero of the bilinear
    interpolant.
    """
    ph = np.angle(psi)
    d1 = _wrap(ph[:-1, 1:] - ph[:-1, :-1])    # bottom edge, +x
    d2 = _wrap(ph[1:, 1:] - ph[:-1, 1:])      # right edge, +y
    d3 = _wrap(ph[1:, :-1] - ph[1:, 1:])      # top edge, -x
    d4 = _wrap(ph[:-1, :-1] - ph[1:, :-1])    # left edge, -y
    wind = np.rint((d1 + d2 + d3 + d4) / (2 * np.pi)).astype(int)
    jj, ii = np.nonzero(wind)
    h = axis[1] - axis[0]
    xs, ys, qs = [], [], []
    for j, i in zip(jj, ii):
        u, v = _refine(psi[j, i], psi[j, i + 1], psi[j + 1, i], psi[j + 1, i + 1])
        x = axis[i] + u * h
        y = axis[j] + v * h
        if x * x + y * y > filter_radius ** 2:
            continue
        xs.append(x)
        ys.append(y)
        qs.append(int(wind[j, i]))
    xs, ys, qs = np.array(xs), np.array(ys), np.array(qs, dtype=int)
    flagged = []
    if xs.size > 1:
        d = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
        a, b = np.nonzero(np.triu(d < 1.5 * abs(h), 1) & (qs[:, None] == qs[None, :]))
        flagged = [(0.5 * (xs[i] + xs[k]), 0.5 * (ys[i] + ys[k]), int(qs[i] + qs[k]))
                   for i, k in zip(a, b)]
    return VortexSet(xs, ys, qs, filter_radius, flagged)


def field_vortices(field, table: ModeTable, extent: float = 12.0, M: int = 256,
                   filter_radius: float = 10.0) -> VortexSet:
    axis, psi, _ = density_grid(field, table, extent, M)
    return detect_vortices(psi, axis, filter_radius)


# --------------------------------------------------------------------------
# pair separations

def pair_histogram(vortices, bin_width: float = 0.25,
                   r_max: float = 20.0) -> PairHistogram:
    """Histogram of all pairwise vortex separations."""
    pos = vortices.positions if hasattr(vortices, "positions") else np.asarray(vortices)
    if len(pos) < 2:
        raise ValueError("need at least two vortices")
    d = pdist(pos)
    edges = np.arange(0.0, r_max + 0.5 * bin_width, bin_width)
    counts, edges = np.histogram(d, bins=edges)
    return PairHistogram(edges, counts)


def histogram_peaks(hist: PairHistogram, smooth_bins: float = 1.0,
                    rel_prominence: float = 0.1, r_max: float = 8.0) -> np.ndarray:
    """Positions of resolved histogram peaks below ``r_max``.

    Counts are normalised by the pair density of a uniform disc (which rises
    linearly at short range) and smoothed with a Gaussian of ``smooth_bins``
    bins.  A peak counts as resolved if its prominence exceeds
    ``rel_prominence`` of the largest smoothed value.
    """
    c = hist.centers
    weight = np.maximum(c, c[0])
    g = gaussian_filter1d(hist.counts / weight, smooth_bins, mode="constant")
    sel = c <= r_max
    g = g[sel]
    if not np.any(g > 0):
        return np.array([])
    peaks, _ = find_peaks(g, prominence=rel_prominence * g.max())
    return c[sel][peaks]


def persistent_peaks(peak_sets, tol: float = 0.5,
                     min_fraction: float = 0.5) -> np.ndarray:
    """Peak positions that recur across a sequence of histograms.

    Peaks from all sets are pooled and grouped when neighbours lie within
    ``tol``; a group is kept if it draws on at least ``min_fraction`` of the
    sets.  Returns the mean position of each kept group.
    """
    sets = [np.atleast_1d(np.asarray(p, float)) for p in peak_sets]
    if not sets:
        return np.array([])
    pooled = sorted((x, k) for k, p in enumerate(sets) for x in p)
    groups, cur = [], []
    for x, k in pooled:
        if cur and x - cur[-1][0] > tol:
            groups.append(cur)
            cur = []
        cur.append((x, k))
    if cur:
        groups.append(cur)
    keep = [np.mean([x for x, _ in g]) for g in groups
            if len({k for _, k in g}) >= min_fraction * len(sets)]
    return np.array(keep)
