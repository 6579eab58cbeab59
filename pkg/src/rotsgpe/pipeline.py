"""Quench protocol: sample, evolve, analyse."""

from __future__ import annotations

import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (TRAP_PERIOD, condensate_band_number, detect_vortices,
                       density_grid, histogram_peaks, ideal_fraction,
                       pair_histogram, penrose_onsager,
                       short_time_density_matrix)
from .basis import ModeTable, build_quadrature
from .config import RunConfig, dump_config
from .dynamics import (EvolutionParams, evolve, interaction_strength,
                       reduced_temperature)
from .io import write_archive, write_csv, write_density_grid, worker_count
from .reservoir import (HBAR, ReservoirSpec, noncondensate_number,
                        transition_temperature)
from .sampler import (InitialEnsembleSpec, make_rng, reduced_chemical_potential,
                      sample_wigner)

# stream ids within a trajectory's seed lineage
INITIAL_STREAM = 0
NOISE_STREAM = 1


def evolution_params(cfg: RunConfig, T: float) -> EvolutionParams:
    trap = cfg.geometry()
    d = cfg.dynamics
    lam = d.lam if d.lam is not None else interaction_strength(
        cfg.species.scattering_length, cfg.species.mass, trap.omega_z)
    return EvolutionParams(
        lam=lam, mu_tilde=reduced_chemical_potential(cfg.mu_J, trap),
        T_tilde=reduced_temperature(T, trap.omega_r), Gamma=d.Gamma, dt=d.dt,
        t_end=d.t_end, noise_on=d.noise_on, snapshot_stride=d.snapshot_stride,
        scheme=d.scheme)


def initial_spec(cfg: RunConfig, n_samples: int = 1) -> InitialEnsembleSpec:
    trap = cfg.geometry()
    return InitialEnsembleSpec(T0=cfg.initial.T0, mu0=cfg.mu0_J, Omega0=trap.Omega,
                               n_samples=n_samples, seed=cfg.ensemble.seed)


def reservoir_spec(cfg: RunConfig, T: float) -> ReservoirSpec:
    trap = cfg.geometry()
    E_R = (cfg.cutoff.Nbar + 1) * HBAR * trap.omega_r
    return ReservoirSpec(T=T, mu=cfg.mu_J, Omega=trap.Omega, E_R=E_R)


@dataclass
class TrajectoryResult:
    T: float
    traj: int
    times: list = field(default_factory=list)
    N_GP: list = field(default_factory=list)
    po_times: list = field(default_factory=list)
    N0: list = field(default_factory=list)
    n_pos: list = field(default_factory=list)
    n_neg: list = field(default_factory=list)
    final_N0: float = math.nan
    N_C: float = math.nan
    N_NC: float = math.nan
    fraction: float = math.nan
    ideal: float = math.nan
    peaks: list = field(default_factory=list)
    peak_timeline: list = field(default_factory=list)
    hist_counts: list = field(default_factory=list)
    hist_edges: list = field(default_factory=list)
    vortices: list = field(default_factory=list)
    seconds: float = 0.0


def analyse_archive(archive, table: ModeTable, cfg: RunConfig, T: float,
                    traj: int = 0, po_every: float = 2.5 * TRAP_PERIOD,
                    out_dir: Optional[Path] = None) -> TrajectoryResult:
    """Growth curve, condensate timeline, vortices and fraction of one run."""
    a = cfg.analysis
    res = TrajectoryResult(T=T, traj=traj)
    obs = archive.observable_array()
    res.times = list(archive.times)
    res.N_GP = list(obs[:, 0])
    times = np.asarray(archive.times)
    t_last = times[-1]
    # condensate timeline from consecutive short-time windows
    n_snap = len(times)
    po_t = []
    t = t_last
    while t - a.window >= times[0] - 1e-9:
        po_t.append(t)
        t -= po_every
    po_t = po_t[::-1]
    po_final = None
    for tk in po_t:
        try:
            rho = short_time_density_matrix(archive, a.window, a.n_samples, tk,
                                            a.half_quantum)
        except ValueError:
            continue
        po = penrose_onsager(rho)
        axis, psi, _ = density_grid(po.mode, table, a.grid_extent, a.grid_M)
        vs = detect_vortices(psi, axis, a.filter_radius)
        res.po_times.append(float(tk))
        res.N0.append(po.N0)
        res.n_pos.append(vs.count(+1))
        res.n_neg.append(vs.count(-1))
        res.peak_timeline.append(_peaks(vs, a.bin_width))
        po_final, vs_final, psi_final, axis_final = po, vs, psi, axis
    if po_final is None and n_snap >= 1:
        # too short for a window: use whatever is there
        k = min(a.n_samples, n_snap)
        rho = short_time_density_matrix(archive, times[-1] - times[-k], k,
                                        half_quantum=a.half_quantum) if k > 1 else \
            short_time_density_matrix(archive, 0.0, 1, half_quantum=a.half_quantum)
        po_final = penrose_onsager(rho)
        axis_final, psi_final, _ = density_grid(po_final.mode, table,
                                                a.grid_extent, a.grid_M)
        vs_final = detect_vortices(psi_final, axis_final, a.filter_radius)
        res.po_times.append(float(t_last))
        res.N0.append(po_final.N0)
        res.n_pos.append(vs_final.count(+1))
        res.n_neg.append(vs_final.count(-1))
        res.peak_timeline.append(_peaks(vs_final, a.bin_width))
    res.final_N0 = po_final.N0
    res.vortices = [[float(x), float(y), int(q)] for x, y, q in
                    zip(vs_final.x, vs_final.y, vs_final.charge)]
    if len(vs_final) >= 2:
        h = pair_histogram(vs_final, a.bin_width)
        res.hist_counts = h.counts.tolist()
        res.hist_edges = h.bin_edges.tolist()
        res.peaks = histogram_peaks(h).tolist()
    t0 = max(times[0], t_last - a.window)
    res.N_C = condensate_band_number(archive, table, a.half_quantum, (t0, t_last))
    trap = cfg.geometry()
    res.N_NC = noncondensate_number(reservoir_spec(cfg, T), trap)
    res.fraction = res.final_N0 / (res.N_C + res.N_NC)
    res.ideal = float(ideal_fraction(T, transition_temperature(cfg.N_atoms, trap)))
    if out_dir is not None:
        write_density_grid(out_dir / "condensate_grid.sgpd", axis_final,
                           psi_final * math.sqrt(max(po_final.N0, 0.0)))
        write_csv(out_dir / "spectrum.csv", ["index", "eigenvalue"],
                  [[i, float(w)] for i, w in enumerate(po_final.spectrum)])
        write_csv(out_dir / "vortices.csv", ["x", "y", "charge"], res.vortices)
        if res.hist_counts:
            write_csv(out_dir / "histogram.csv", ["lo", "hi", "count"],
                      [[res.hist_edges[i], res.hist_edges[i + 1], c]
                       for i, c in enumerate(res.hist_counts)])
        write_csv(out_dir / "condensate_timeline.csv",
                  ["t", "N0", "n_positive", "n_negative", "n_peaks"],
                  [[t, n, p, q, len(k)] for t, n, p, q, k in
                   zip(res.po_times, res.N0, res.n_pos, res.n_neg,
                       res.peak_timeline)])
    return res


def _peaks(vs, bin_width) -> list:
    if len(vs) < 2:
        return []
    return histogram_peaks(pair_histogram(vs, bin_width)).tolist()


def run_trajectory(cfg: RunConfig, T: float, traj: int,
                   out_dir: Optional[Path] = None) -> TrajectoryResult:
    start = time.time()
    trap = cfg.geometry()
    table = ModeTable(cfg.cutoff.Nbar, cfg.trap.Omega_frac)
    quad = build_quadrature(table)
    spec = initial_spec(cfg)
    init = sample_wigner(spec, table, trap, traj, INITIAL_STREAM)
    params = evolution_params(cfg, T)
    rng = make_rng(cfg.ensemble.seed, traj, NOISE_STREAM)
    archive = evolve(init, params, quad, table, rng)
    archive.rng_lineage = {"seed": cfg.ensemble.seed, "traj": traj,
                           "initial_stream": INITIAL_STREAM,
                           "noise_stream": NOISE_STREAM,
                           "generator": "Philox"}
    if out_dir is not None:
        write_archive(out_dir, archive, table, {"T": T})
    res = analyse_archive(archive, table, cfg, T, traj, out_dir=out_dir)
    res.seconds = time.time() - start
    return res


def _job(args):
    cfg, T, traj, out = args
    try:
        return run_trajectory(cfg, T, traj, out), None
    except Exception:  # isolate failures per trajectory
        return None, traceback.format_exc()


def run_quench(cfg: RunConfig, out, workers: Optional[int] = None) -> Path:
    """Run every (temperature, trajectory) pair and aggregate the results."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for T in cfg.quench.T:
        for i in range(cfg.ensemble.n_traj):
            d = out / f"T{T * 1e9:g}nK" / f"traj{i:04d}"
            d.mkdir(parents=True, exist_ok=True)
            jobs.append((cfg, T, i, d))
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            outcomes = list(ex.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]
    results, failures = [], []
    for (c, T, i, d), (res, err) in zip(jobs, outcomes):
        if err is None:
            results.append(res)
        else:
            failures.append({"T": T, "traj": i, "error": err})
    _aggregate(out, results)
    manifest = {
        "version": __version__,
        "config": dump_config(cfg),
        "seeds": {"seed": cfg.ensemble.seed,
                  "trajectories": [[T, i] for (_, T, i, _) in jobs],
                  "initial_stream": INITIAL_STREAM,
                  "noise_stream": NOISE_STREAM},
        "failures": failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def _aggregate(out: Path, results: list):
    rows = []
    for T in sorted({r.T for r in results}):
        group = [r for r in results if r.T == T]
        n = min(len(r.times) for r in group)
        N = np.mean([r.N_GP[:n] for r in group], axis=0)
        for t, v in zip(group[0].times[:n], N):
            rows.append([T, t, v])
    write_csv(out / "growth.csv", ["T", "t", "N_GP_mean"], rows)
    write_csv(out / "fraction.csv",
              ["T", "traj", "N0", "N_C", "N_NC", "fraction", "ideal"],
              [[r.T, r.traj, r.final_N0, r.N_C, r.N_NC, r.fraction, r.ideal]
               for r in results])
    hist_rows = []
    for r in results:
        for i, c in enumerate(r.hist_counts):
            hist_rows.append([r.T, r.traj, r.hist_edges[i], r.hist_edges[i + 1], c])
    write_csv(out / "histograms.csv", ["T", "traj", "lo", "hi", "count"], hist_rows)
