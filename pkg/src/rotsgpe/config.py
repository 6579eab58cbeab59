"""Run configuration with explicit unit tags.

Config files are YAML mappings whose physical values are strings such as
``"8.3 Hz"`` or ``"3.5 eps000"``.  Values are converted to canonical units
on load (SI, with frequencies as angular frequencies) and written back in
those canonical units, so a dump/load cycle is lossless.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml
from scipy import constants

from .basis import TrapGeometry

HBAR = constants.hbar
KB = constants.k
AMU = constants.atomic_mass
BOHR = constants.physical_constants["Bohr radius"][0]

# 87Rb: literature mass and s-wave scattering length (about 100.4 a0)
RB87_MASS = 86.909180527 * AMU
RB87_SCATTERING_LENGTH = 100.4 * BOHR


class ConfigError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


# quantity kind -> unit tag -> factor to canonical units (callable for
# trap-dependent energy units)
_UNITS = {
    "frequency": {"Hz": 2 * math.pi, "rad/s": 1.0, "kHz": 2e3 * math.pi},
    "temperature": {"K": 1.0, "mK": 1e-3, "uK": 1e-6, "nK": 1e-9},
    "length": {"m": 1.0, "um": 1e-6, "nm": 1e-9, "a0": BOHR},
    "mass": {"kg": 1.0, "amu": AMU},
    "energy": {"J": 1.0, "eps000": None, "hbar_omega_r": None, "kB_nK": KB * 1e-9},
    "time": {"omega_r^-1": 1.0, "trap_periods": 2 * math.pi},
    "dimensionless": {"dimensionless": 1.0, "": 1.0},
}
_CANONICAL = {"frequency": "rad/s", "temperature": "K", "length": "m",
              "mass": "kg", "energy": "J", "time": "omega_r^-1",
              "dimensionless": "dimensionless"}

_NUM_UNIT = re.compile(r"^\s*([-+0-9.eE]+(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(text, kind: str, trap: Optional[TrapGeometry] = None,
                   line: Optional[int] = None) -> float:
    """Convert ``"<number> <unit>"`` to canonical units of ``kind``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if kind != "dimensionless":
            raise ConfigError(f"missing unit tag for {kind} value {text!r}", line)
        return float(text)
    m = _NUM_UNIT.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse quantity {text!r}", line)
    value, unit = float(m.group(1)), m.group(2)
    table = _UNITS[kind]
    if unit not in table:
        raise ConfigError(
            f"unit {unit!r} is not a {kind} unit (allowed: {sorted(k for k in table if k)})",
            line)
    factor = table[unit]
    if factor is None:
        if trap is None:
            raise ConfigError(f"unit {unit!r} needs the trap section", line)
        factor = trap.eps000 if unit == "eps000" else HBAR * trap.omega_r
    return value * factor


def format_quantity(value: float, kind: str) -> str:
    return f"{value!r} {_CANONICAL[kind]}"


# --------------------------------------------------------------------------
# schema

@dataclass
class TrapConfig:
    omega_r: float = 2 * math.pi * 8.3
    omega_z: float = 2 * math.pi * 5.3
    Omega_frac: float = 0.979

    def geometry(self, mass: float) -> TrapGeometry:
        return TrapGeometry(self.omega_r, self.omega_z,
                            self.Omega_frac * self.omega_r, mass)


@dataclass
class SpeciesConfig:
    mass: float = RB87_MASS
    scattering_length: float = RB87_SCATTERING_LENGTH


@dataclass
class CutoffConfig:
    Nbar: int = 4


@dataclass
class InitialConfig:
    T0: float = 12e-9
    mu0: float = 0.5     # in eps000 until resolved
    mu0_unit: str = "eps000"


@dataclass
class QuenchConfig:
    T: list = field(default_factory=lambda: [1e-9])
    mu: float = 3.5
    mu_unit: str = "eps000"


@dataclass
class DynamicsConfig:
    Gamma: float = 0.01
    dt: float = 2 * math.pi * 1e-3
    t_end: float = 0.0
    snapshot_stride: int = 50
    noise_on: bool = True
    scheme: str = "rk4ip"
    lam: Optional[float] = None


@dataclass
class AnalysisConfig:
    window: float = 2.5 * 2 * math.pi
    n_samples: int = 50
    filter_radius: float = 10.0
    bin_width: float = 0.25
    grid_M: int = 256
    grid_extent: float = 12.0
    half_quantum: bool = True
    initial_filter_radius: float = 3.0


@dataclass
class EnsembleConfig:
    n_traj: int = 1
    seed: int = 0
    n_initial_samples: int = 500


@dataclass
class RunConfig:
    trap: TrapConfig = field(default_factory=TrapConfig)
    species: SpeciesConfig = field(default_factory=SpeciesConfig)
    cutoff: CutoffConfig = field(default_factory=CutoffConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    quench: QuenchConfig = field(default_factory=QuenchConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    N_atoms: float = 1.3e6

    # derived quantities
    def geometry(self) -> TrapGeometry:
        return self.trap.geometry(self.species.mass)

    def energy(self, value: float, unit: str) -> float:
        """Energy in joules for a stored ``(value, unit)`` pair."""
        return parse_quantity(f"{value!r} {unit}", "energy", self.geometry())

    @property
    def mu0_J(self) -> float:
        return self.energy(self.initial.mu0, self.initial.mu0_unit)

    @property
    def mu_J(self) -> float:
        return self.energy(self.quench.mu, self.quench.mu_unit)

    def to_dict(self) -> dict:
        return dump_config(self)

    def copy(self, **changes) -> "RunConfig":
        out = copy.deepcopy(self)
        for path, value in changes.items():
            section, _, key = path.partition("__")
            if key:
                setattr(getattr(out, section), key, value)
            else:
                setattr(out, section, value)
        return out


# (section, key) -> quantity kind; "int", "bool", "str" and "float" are raw
_SCHEMA = {
    ("trap", "omega_r"): "frequency",
    ("trap", "omega_z"): "frequency",
    ("trap", "Omega_frac"): "dimensionless",
    ("species", "mass"): "mass",
    ("species", "scattering_length"): "length",
    ("cutoff", "Nbar"): "int",
    ("initial", "T0"): "temperature",
    ("initial", "mu0"): "energy_tagged",
    ("quench", "T"): "temperature_list",
    ("quench", "mu"): "energy_tagged",
    ("dynamics", "Gamma"): "dimensionless",
    ("dynamics", "dt"): "time",
    ("dynamics", "t_end"): "time",
    ("dynamics", "snapshot_stride"): "int",
    ("dynamics", "noise_on"): "bool",
    ("dynamics", "scheme"): "str",
    ("dynamics", "lam"): "optional_dimensionless",
    ("analysis", "window"): "time",
    ("analysis", "n_samples"): "int",
    ("analysis", "filter_radius"): "r0",
    ("analysis", "bin_width"): "r0",
    ("analysis", "grid_M"): "int",
    ("analysis", "grid_extent"): "r0",
    ("analysis", "half_quantum"): "bool",
    ("analysis", "initial_filter_radius"): "r0",
    ("ensemble", "n_traj"): "int",
    ("ensemble", "seed"): "int",
    ("ensemble", "n_initial_samples"): "int",
    (None, "N_atoms"): "float",
}


def _node_lines(node, prefix=()):
    # flatten a composed YAML mapping into {path: (python value, line)}
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            if isinstance(v, yaml.MappingNode):
                out.update(_node_lines(v, prefix + (key,)))
            else:
                out[prefix + (key,)] = (yaml.safe_load(yaml.serialize(v)),
                                        v.start_mark.line + 1)
    return out


def _convert(kind, raw, line, trap):
    if kind == "int":
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"expected an integer, got {raw!r}", line)
        return raw
    if kind == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"expected a number, got {raw!r}", line)
        return float(raw)
    if kind == "bool":
        if not isinstance(raw, bool):
            raise ConfigError(f"expected true/false, got {raw!r}", line)
        return raw
    if kind == "str":
        return str(raw)
    if kind == "r0":
        text = str(raw).strip()
        if not text.endswith("r0"):
            raise ConfigError(f"length {raw!r} must be tagged r0", line)
        try:
            return float(text[:-2])
        except ValueError:
            raise ConfigError(f"cannot parse length {raw!r}", line) from None
    if kind == "optional_dimensionless":
        return None if raw is None else parse_quantity(raw, "dimensionless", line=line)
    if kind == "temperature_list":
        items = raw if isinstance(raw, list) else [raw]
        return [parse_quantity(x, "temperature", line=line) for x in items]
    if kind == "energy_tagged":
        m = _NUM_UNIT.match(str(raw))
        if not m or m.group(2) not in _UNITS["energy"]:
            raise ConfigError(f"cannot parse energy {raw!r}", line)
        return float(m.group(1)), m.group(2)
    return parse_quantity(raw, kind, trap, line)


def _cutoff_from_energy(raw, line) -> int:
    # E_R = (Nbar + 1) hbar omega_r; only whole quanta define a band
    m = _NUM_UNIT.match(str(raw))
    if not m or m.group(2) != "hbar_omega_r":
        raise ConfigError(f"cutoff E_R {raw!r} must be tagged hbar_omega_r", line)
    E = float(m.group(1))
    if E < 1 or abs(E - round(E)) > 1e-9:
        raise ConfigError(f"cutoff E_R must be a whole number >= 1 of hbar_omega_r, "
                          f"got {E!r}", line)
    return int(round(E)) - 1


def config_from_dict(data: dict, lines: Optional[dict] = None,
                     base: Optional[RunConfig] = None) -> RunConfig:
    """Build a RunConfig from a nested mapping; unspecified keys keep defaults."""
    cfg = copy.deepcopy(base) if base is not None else RunConfig()
    lines = lines or {}
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            for k2, v2 in value.items():
                flat[(key, k2)] = v2
        else:
            flat[(None, key)] = value
    for path, raw in flat.items():
        line = lines.get(tuple(p for p in path if p is not None))
        if path == ("cutoff", "E_R"):
            cfg.cutoff.Nbar = _cutoff_from_energy(raw, line)
            continue
        if path not in _SCHEMA:
            dotted = ".".join(p for p in path if p is not None)
            raise ConfigError(f"unknown key {dotted!r}", line)
        value = _convert(_SCHEMA[path], raw, line, None)
        section, key = path
        if section is None:
            setattr(cfg, key, value)
        elif _SCHEMA[path] == "energy_tagged":
            setattr(getattr(cfg, section), key, value[0])
            setattr(getattr(cfg, section), key + "_unit", value[1])
        else:
            setattr(getattr(cfg, section), key, value)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: RunConfig, lines: dict):
    def bad(path, msg):
        raise ConfigError(msg, lines.get(path))

    if not 0 <= cfg.trap.Omega_frac < 1:
        bad(("trap", "Omega_frac"), "Omega_frac must lie in [0, 1)")
    if cfg.trap.omega_r <= 0 or cfg.trap.omega_z <= 0:
        bad(("trap", "omega_r"), "trap frequencies must be positive")
    if cfg.species.mass <= 0 or cfg.species.scattering_length <= 0:
        bad(("species", "mass"), "mass and scattering length must be positive")
    if cfg.cutoff.Nbar < 0:
        bad(("cutoff", "Nbar"), "Nbar must be >= 0")
    if cfg.initial.T0 <= 0 or any(T <= 0 for T in cfg.quench.T):
        bad(("quench", "T"), "temperatures must be positive")
    if cfg.dynamics.dt <= 0 or cfg.dynamics.t_end < 0 or cfg.dynamics.Gamma < 0:
        bad(("dynamics", "dt"), "need dt > 0, t_end >= 0, Gamma >= 0")
    if cfg.dynamics.scheme not in ("rk4", "rk4ip"):
        bad(("dynamics", "scheme"), "scheme must be rk4 or rk4ip")
    if cfg.ensemble.n_traj < 1 or cfg.analysis.n_samples < 1:
        bad(("ensemble", "n_traj"), "counts must be >= 1")
    # reservoir occupations diverge unless mu sits below the cutoff energy
    geo = cfg.geometry()
    E_R = (cfg.cutoff.Nbar + 1) * HBAR * geo.omega_r
    if cfg.mu_J >= E_R:
        bad(("quench", "mu"), f"quench mu ({cfg.mu_J / (HBAR * geo.omega_r):.4g} "
            f"hbar_omega_r) must lie below the cutoff (Nbar + 1 = "
            f"{cfg.cutoff.Nbar + 1} hbar_omega_r)")


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    """Read a YAML config; errors cite the offending line."""
    with open(path) as fh:
        text = fh.read()
    return loads_config(text, base)


def loads_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if node is None:
        return copy.deepcopy(base) if base is not None else RunConfig()
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", node.start_mark.line + 1)
    lines = {k: ln for k, (_, ln) in _node_lines(node).items()}
    data = yaml.safe_load(text)
    return config_from_dict(data, lines, base)


def dump_config(cfg: RunConfig) -> dict:
    """Nested mapping in canonical, unit-tagged form."""
    out: dict[str, Any] = {}
    for (section, key), kind in _SCHEMA.items():
        holder = cfg if section is None else getattr(cfg, section)
        value = getattr(holder, key)
        if kind in ("int", "bool", "str", "float"):
            text = value
        elif kind == "r0":
            text = f"{value!r} r0"
        elif kind == "optional_dimensionless":
            text = None if value is None else repr(float(value))
        elif kind == "temperature_list":
            text = [format_quantity(T, "temperature") for T in value]
        elif kind == "energy_tagged":
            text = f"{value!r} {getattr(holder, key + '_unit')}"
        else:
            text = format_quantity(value, kind)
        if section is None:
            out[key] = text
        else:
            out.setdefault(section, {})[key] = text
    return out


def dumps_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(dump_config(cfg), sort_keys=False)


# --------------------------------------------------------------------------
# presets

SWEEP_TEMPERATURES_NK = [1, 2, 3, 4, 5, 7, 9, 11]


def preset(name: str) -> RunConfig:
    """Named configurations.

    ``rb87-quench``
        87Rb in (omega_z, omega_r) = 2 pi (5.3, 8.3) Hz rotating at
        0.979 omega_r, Nbar = 4, quenched from 12 nK, 0.5 eps000 to 1 nK,
        3.5 eps000 with Gamma = 0.01, run for 50 s.
    ``rb87-sweep``
        As above over final temperatures 1..11 nK.
    ``reduced-low`` / ``reduced-high``
        The same quench at 1 nK / 11 nK evolved for 50 trap periods with a
        larger step, for desk-top runs.
    ``nbar0``
        Single-mode band.
    """
    cfg = RunConfig()
    if name == "rb87-quench":
        cfg.dynamics.t_end = 50.0 * cfg.trap.omega_r
        cfg.dynamics.snapshot_stride = 400
    elif name == "rb87-sweep":
        cfg.quench.T = [T * 1e-9 for T in SWEEP_TEMPERATURES_NK]
        cfg.dynamics.t_end = 50.0 * cfg.trap.omega_r
        cfg.dynamics.snapshot_stride = 400
    elif name in ("reduced-low", "reduced-high"):
        cfg.quench.T = [1e-9] if name == "reduced-low" else [11e-9]
        cfg.dynamics.dt = 0.02
        cfg.dynamics.t_end = 50 * 2 * math.pi
        cfg.dynamics.snapshot_stride = 5
    elif name == "nbar0":
        cfg.cutoff.Nbar = 0
        cfg.trap.Omega_frac = 0.5
        cfg.initial.mu0 = 0.5
        cfg.initial.mu0_unit = "hbar_omega_r"
        cfg.quench.mu = 0.9
        cfg.quench.mu_unit = "hbar_omega_r"
        cfg.dynamics.t_end = 2 * math.pi
        cfg.dynamics.snapshot_stride = 10
        cfg.ensemble.n_initial_samples = 50
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    return cfg


PRESETS = ("rb87-quench", "rb87-sweep", "reduced-low", "reduced-high", "nbar0")
