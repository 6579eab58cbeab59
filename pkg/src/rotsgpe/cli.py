"""Command line entry point: ``rotsgpe <subcommand>``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import ModeTable, build_quadrature, project, to_position
from .config import (PRESETS, ConfigError, RunConfig, dumps_config, load_config,
                     preset)
from .dynamics import EvolutionParams, evolve
from .io import (FormatError, read_archive, read_checkpoint, write_archive,
                 write_checkpoint, write_csv)
from .pipeline import (NOISE_STREAM, analyse_archive, evolution_params,
                       initial_spec, run_quench)
from .reservoir import (KB, ReservoirSpec, compute_rates, growth_rate_profile,
                        thermo_row)
from .sampler import (make_rng, sample_ensemble, sample_wigner,
                      thermal_occupation)


def _load(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg.ensemble.seed = args.seed
    if getattr(args, "traj", None) is not None:
        cfg.ensemble.n_traj = args.traj
    return cfg


def _emit_csv(path, header, rows):
    if path:
        write_csv(path, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                           for v in row))


# --------------------------------------------------------------------------
# subcommands

def cmd_thermo(args) -> int:
    cfg = _load(args)
    rows = []
    for frac in np.linspace(0.0, args.max_omega, args.points):
        c = cfg.copy(trap__Omega_frac=float(frac))
        r = thermo_row(c.geometry(), cfg.N_atoms)
        rows.append([r["Omega_frac"], r["T_C"], r["N_NC"], r["Lz_per_N"],
                     r["sigma_Lz"]])
    _emit_csv(args.out, ["Omega_frac", "T_C", "N_NC", "Lz_per_N", "sigma_Lz"], rows)
    return 0


def cmd_rates(args) -> int:
    cfg = _load(args)
    # spherical trap, no rotation, E_R = 3 mu
    trap = cfg.copy(trap__Omega_frac=0.0).geometry()
    T = args.temperature * 1e-9
    mu = args.mu_over_kT * KB * T
    spec = ReservoirSpec(T=T, mu=mu, Omega=0.0, E_R=args.cutoff_over_mu * mu)
    a_s = cfg.species.scattering_length
    Q_R = math.sqrt(2 * spec.E_R / (trap.mass * trap.omega_r ** 2))
    Q = np.linspace(0, args.q_max * Q_R, args.points)
    G, region = growth_rate_profile(Q, spec, trap, a_s)
    _emit_csv(args.out, ["Q_over_r0", "G1", "region_flag"],
              [[float(q / trap.r0), float(g), int(f)] for q, g, f in zip(Q, G, region)])
    rates = compute_rates(spec, trap.mass, a_s)
    summary = {
        "G1_in": rates.G1_in, "G2_in": rates.G2_in, "gamma": rates.gamma,
        "G1_out": rates.G1_out, "G2_out": rates.G2_out,
        "R_G": (rates.G1_out + rates.G2_out) / rates.gamma,
        "M_amp": rates.M_amp,
        "hbar_gamma_over_kT": rates.dimensionless_gamma(T),
    }
    print(json.dumps(summary), file=sys.stderr)
    return 0


def cmd_sample(args) -> int:
    cfg = _load(args)
    trap = cfg.geometry()
    table = ModeTable(cfg.cutoff.Nbar, cfg.trap.Omega_frac)
    out = Path(args.out or "samples")
    out.mkdir(parents=True, exist_ok=True)
    spec = initial_spec(cfg)
    for i in range(cfg.ensemble.n_traj):
        state = sample_wigner(spec, table, trap, i, 0)
        write_checkpoint(out / f"traj{i:04d}.sgpf", state, table)
    print(f"wrote {cfg.ensemble.n_traj} checkpoints to {out}")
    return 0


def cmd_evolve(args) -> int:
    cfg = _load(args)
    header, state = read_checkpoint(args.checkpoint)
    if (header.Nbar, header.Omega_frac) != (cfg.cutoff.Nbar, cfg.trap.Omega_frac):
        cfg = cfg.copy(cutoff__Nbar=header.Nbar, trap__Omega_frac=header.Omega_frac)
    table = ModeTable(header.Nbar, header.Omega_frac)
    quad = build_quadrature(table)
    T = cfg.quench.T[0] if args.temperature is None else args.temperature * 1e-9
    params = evolution_params(cfg, T)
    traj = args.traj_index
    rng = make_rng(cfg.ensemble.seed, traj, NOISE_STREAM)
    archive = evolve(state, params, quad, table, rng)
    archive.rng_lineage = {"seed": cfg.ensemble.seed, "traj": traj,
                           "noise_stream": NOISE_STREAM, "generator": "Philox"}
    out = write_archive(args.out or "archive", archive, table,
                        {"T": T, "config": cfg.to_dict()})
    print(f"wrote {len(archive)} snapshots to {out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args)
    archive, table, meta = read_archive(args.archive)
    T = meta.get("T", cfg.quench.T[0])
    cfg = cfg.copy(cutoff__Nbar=table.Nbar, trap__Omega_frac=table.Omega_frac)
    out = Path(args.out or args.archive)
    out.mkdir(parents=True, exist_ok=True)
    res = analyse_archive(archive, table, cfg, T, out_dir=out)
    write_csv(out / "fraction.csv", ["T", "N0", "N_C", "N_NC", "fraction", "ideal"],
              [[T, res.final_N0, res.N_C, res.N_NC, res.fraction, res.ideal]])
    print(f"N0={res.final_N0:.6g} vortices=+{res.n_pos[-1]}/-{res.n_neg[-1]} "
          f"fraction={res.fraction:.4g}")
    return 0


def cmd_quench(args) -> int:
    cfg = _load(args)
    out = run_quench(cfg, args.out or "quench_out")
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"results in {out}; failures: {len(manifest['failures'])}")
    return 1 if manifest["failures"] else 0


def verify_report(cfg: RunConfig) -> list[tuple[str, str, bool]]:
    """Fast invariant gates: ``(name, value, passed)`` per gate."""
    out = []
    trap = cfg.geometry()
    table = ModeTable(cfg.cutoff.Nbar, cfg.trap.Omega_frac)
    count = len(table)
    expected = int(sum(l_p + l_m + 1 for l_p, l_m in zip(table.l_plus, table.l_minus)))
    out.append(("modes", str(count), count == expected and count > 0))

    quad = build_quadrature(table)
    rng = np.random.default_rng(cfg.ensemble.seed)
    a = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    back = project(to_position(a, quad), quad).coeffs
    err = float(np.max(np.abs(back - a)) / np.max(np.abs(a)))
    out.append(("roundtrip", f"{err:.2e}", err < 1e-12))

    lam = evolution_params(cfg, cfg.quench.T[0]).lam
    amp = a * math.sqrt(2e3 / np.sum(np.abs(a) ** 2))
    p = EvolutionParams(lam=lam, dt=cfg.dynamics.dt, t_end=2 * math.pi,
                        noise_on=False, snapshot_stride=10 ** 9)
    arch = evolve(amp, p, quad, table)
    o = arch.observable_array()
    # L_z reference can vanish (single-mode band); scale by N instead
    ref = np.where(np.abs(o[0]) > 0, np.abs(o[0]), o[0, 0])
    drift = float(np.max(np.abs(o[-1] - o[0]) / ref))
    out.append(("conservation", f"{drift:.2e}", drift < 1e-8))

    spec = initial_spec(cfg, n_samples=200)
    mu_t, T_t = spec.reduced(trap)
    N = thermal_occupation(table.freqs, mu_t, T_t)
    S = sample_ensemble(spec, table, trap)
    occ = np.mean(np.abs(S) ** 2, axis=0)
    z = (occ - (N + 0.5)) / ((N + 0.5) / math.sqrt(len(S)))
    worst = float(np.max(np.abs(z)))
    out.append(("sampler", f"max|z|={worst:.2f}", worst < 5.0))
    return out


def cmd_verify(args) -> int:
    cfg = _load(args)
    ok = True
    for name, value, passed in verify_report(cfg):
        print(f"{name}={value} {'PASS' if passed else 'FAIL'}")
        ok &= passed
    if args.checkpoint:
        try:
            header, _ = read_checkpoint(args.checkpoint)
            print(f"checkpoint={header.count} PASS")
        except (FormatError, OSError) as exc:
            print(f"checkpoint=error FAIL ({exc})")
            ok = False
    return 0 if ok else 1


def cmd_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(dumps_config(cfg))
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotsgpe",
        description="Stochastic projected GPE for rotating Bose gases.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--preset", choices=PRESETS, help="named configuration")
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument("--traj", type=int, help="number of trajectories")
        p.add_argument("--out", help="output file or directory")
        return p

    p = common(sub.add_parser("thermo", help="T_C and angular momentum vs rotation"))
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--max-omega", type=float, default=0.999)
    p.set_defaults(func=cmd_thermo)

    p = common(sub.add_parser("rates", help="growth-rate profile in a spherical trap"))
    p.add_argument("--temperature", type=float, default=100.0, help="[nK]")
    p.add_argument("--mu-over-kT", type=float, default=0.1)
    p.add_argument("--cutoff-over-mu", type=float, default=3.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--q-max", type=float, default=1.2,
                   help="largest radius in units of the band edge")
    p.set_defaults(func=cmd_rates)

    p = common(sub.add_parser("sample", help="draw initial Wigner states"))
    p.set_defaults(func=cmd_sample)

    p = common(sub.add_parser("evolve", help="evolve one checkpoint"))
    p.add_argument("checkpoint")
    p.add_argument("--temperature", type=float, help="final temperature [nK]")
    p.add_argument("--traj-index", type=int, default=0)
    p.set_defaults(func=cmd_evolve)

    p = common(sub.add_parser("analyze", help="analyse a trajectory archive"))
    p.add_argument("archive")
    p.set_defaults(func=cmd_analyze)

    p = common(sub.add_parser("quench", help="full quench protocol"))
    p.set_defaults(func=cmd_quench)

    p = common(sub.add_parser("verify", help="fast invariant gates"))
    p.add_argument("--checkpoint", help="also validate this checkpoint file")
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("config", help="print the resolved configuration"))
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
