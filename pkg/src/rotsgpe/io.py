"""Binary checkpoints, trajectory archives and density grids.

Checkpoint record (little-endian)::

    4s   magic  b"SGPF"
    u32  format version
    u32  Nbar
    f64  Omega / omega_r
    u64  mode count
    f64  time [1/omega_r]
    count x (f64 re, f64 im)   coefficients in mode-table order

A trajectory archive is a directory holding ``snapshots.sgpf`` (checkpoint
records back to back), ``observables.csv`` (t, N_GP, E_GP, L_z) and
``archive.json`` (parameters and RNG lineage).
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import FieldState, ModeTable
from .dynamics import EvolutionParams, TrajectoryArchive

MAGIC = b"SGPF"
GRID_MAGIC = b"SGPD"
VERSION = 1
_HEADER = struct.Struct("<4sIIdQd")
_GRID_HEADER = struct.Struct("<4sIQd")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class CheckpointHeader:
    version: int
    Nbar: int
    Omega_frac: float
    count: int
    time: float


def encode_checkpoint(state: FieldState, table: ModeTable) -> bytes:
    coeffs = np.asarray(state.coeffs, dtype="<c16")
    if coeffs.size != len(table):
        raise ValueError("state does not match the mode table")
    head = _HEADER.pack(MAGIC, VERSION, table.Nbar, float(table.Omega_frac),
                        coeffs.size, float(state.time))
    return head + coeffs.tobytes()


def decode_checkpoint(buf: bytes, offset: int = 0):
    """Return ``(header, FieldState, next_offset)``."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated checkpoint header")
    magic, version, Nbar, frac, count, time = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a field checkpoint")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    expected = len(ModeTable(Nbar, frac))
    if count != expected:
        raise FormatError(
            f"mode count {count} does not match the band (Nbar={Nbar}, "
            f"Omega_frac={frac}) with {expected} modes")
    start = offset + _HEADER.size
    end = start + 16 * count
    if len(buf) < end:
        raise FormatError("truncated checkpoint payload")
    coeffs = np.frombuffer(buf, dtype="<c16", count=count, offset=start).astype(complex)
    header = CheckpointHeader(version, Nbar, frac, count, time)
    return header, FieldState(coeffs, time), end


def write_checkpoint(path, state: FieldState, table: ModeTable) -> None:
    Path(path).write_bytes(encode_checkpoint(state, table))


def read_checkpoint(path):
    """Return ``(header, FieldState)``."""
    buf = Path(path).read_bytes()
    header, state, end = decode_checkpoint(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after checkpoint payload")
    return header, state


# --------------------------------------------------------------------------
# CSV

def write_csv(path, header, rows) -> None:
    """CSV with full-precision floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(-1, len(header))


# --------------------------------------------------------------------------
# trajectory archives

def write_archive(directory, archive: TrajectoryArchive, table: ModeTable,
                  extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "snapshots.sgpf", "wb") as fh:
        for t, c in zip(archive.times, archive.coeffs):
            fh.write(encode_checkpoint(FieldState(c, t), table))
    obs = archive.observable_array()
    write_csv(d / "observables.csv", ["t", "N_GP", "E_GP", "L_z"],
              [[t, *o] for t, o in zip(archive.times, obs)])
    meta = {
        "params": archive.params.to_dict() if archive.params else None,
        "rng_lineage": archive.rng_lineage,
        "Nbar": table.Nbar,
        "Omega_frac": table.Omega_frac,
        "n_snapshots": len(archive.times),
    }
    if extra:
        meta.update(extra)
    (d / "archive.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return d


def read_archive(directory):
    """Return ``(TrajectoryArchive, ModeTable, metadata)``."""
    d = Path(directory)
    meta = json.loads((d / "archive.json").read_text())
    buf = (d / "snapshots.sgpf").read_bytes()
    table = ModeTable(meta["Nbar"], meta["Omega_frac"])
    params = EvolutionParams(**meta["params"]) if meta.get("params") else None
    arch = TrajectoryArchive(params=params, rng_lineage=meta.get("rng_lineage", {}))
    _, obs = read_csv(d / "observables.csv")
    off = 0
    k = 0
    while off < len(buf):
        _, state, off = decode_checkpoint(buf, off)
        arch.append(state.time, state.coeffs, obs[k, 1:])
        k += 1
    return arch, table, meta


# --------------------------------------------------------------------------
# density grids

def write_density_grid(path, axis: np.ndarray, psi: np.ndarray) -> None:
    """Grid record: magic, version, M, extent, then M*M complex values."""
    M = axis.size
    head = _GRID_HEADER.pack(GRID_MAGIC, VERSION, M, float(axis[-1]))
    Path(path).write_bytes(head + np.asarray(psi, dtype="<c16").tobytes())


def read_density_grid(path):
    buf = Path(path).read_bytes()
    magic, version, M, extent = _GRID_HEADER.unpack_from(buf, 0)
    if magic != GRID_MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a density grid")
    psi = np.frombuffer(buf, dtype="<c16", offset=_GRID_HEADER.size).reshape(M, M)
    return np.linspace(-extent, extent, M), psi.astype(complex)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def worker_count(default: int = 1) -> int:
    """Worker processes from the SGPE_WORKERS environment variable."""
    try:
        return max(1, int(os.environ.get("SGPE_WORKERS", default)))
    except ValueError:
        return default
