"""Declarative TOML configuration with mandatory units, plus run manifests.

Dimensioned quantities in config files are strings carrying an explicit
unit suffix ("638 nm", "0.56 ps", "1e13 Hz"); bare numbers are accepted
only for dimensionless values.  Everything is converted to SI at load time
so the numerical core never sees a unit.

A run manifest captures the fully resolved parameters, seeds and output
paths of a CLI invocation; re-executing from the manifest reproduces the
outputs byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .model import (
    CavityConfig,
    CouplingSpec,
    NVLevelScheme,
    PumpPulse,
    SystemModel,
    Truncation,
    coupling_from_dipole,
    kappa_from_q,
)

__all__ = [
    "ConfigError",
    "parse_quantity",
    "load_config",
    "build_model",
    "model_fingerprint",
    "RunManifest",
]


class ConfigError(ValueError):
    """Malformed configuration (bad units, missing keys, inconsistent values)."""


_UNITS: dict[str, tuple[str, float]] = {
    # length
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "µm": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "pm": ("length", 1e-12),
    # time
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "µs": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "ps": ("time", 1e-12),
    "fs": ("time", 1e-15),
    # rates / ordinary frequency (1/s)
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "THz": ("frequency", 1e12),
    # angular frequency
    "rad/s": ("angular_frequency", 1.0),
    # volume
    "m^3": ("volume", 1.0),
    "um^3": ("volume", 1e-18),
    "nm^3": ("volume", 1e-27),
    # electric dipole
    "C m": ("dipole", 1.0),
}


def parse_quantity(value, dimension: str, key: str = "") -> float:
    """Convert a config value to SI, enforcing the expected ``dimension``.

    ``dimension = "dimensionless"`` accepts bare numbers; any other
    dimension requires a string with a unit suffix.
    """
    where = f" for {key!r}" if key else ""
    if isinstance(value, bool):
        raise ConfigError(f"expected a quantity{where}, got a boolean")
    if isinstance(value, (int, float)):
        if dimension != "dimensionless":
            raise ConfigError(
                f"missing units{where}: write e.g. \"638 nm\" instead of a bare number"
            )
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"cannot parse quantity{where} from {type(value).__name__}")
    text = value.strip()
    if dimension == "dimensionless":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"expected a dimensionless number{where}, got {value!r}") from None
    parts = text.split(None, 1)
    if len(parts) != 2:
        raise ConfigError(f"expected '<number> <unit>'{where}, got {value!r}")
    num_text, unit = parts[0], parts[1].strip()
    try:
        num = float(num_text)
    except ValueError:
        raise ConfigError(f"bad numeric value{where}: {num_text!r}") from None
    if unit not in _UNITS:
        raise ConfigError(f"unknown unit {unit!r}{where}")
    dim, scale = _UNITS[unit]
    if dim != dimension:
        raise ConfigError(f"unit {unit!r}{where} has dimension {dim}, expected {dimension}")
    return num * scale


def load_config(path) -> dict:
    """Parse a TOML config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from None


def _get(section: dict, key: str, dimension: str, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    return parse_quantity(section[key], dimension, key=key)


def build_model(cfg: dict, rep_period: float | None = None) -> SystemModel:
    """Assemble a :class:`SystemModel` from parsed config sections.

    ``rep_period`` (seconds) overrides the pump's repetition period, used by
    the pulse-train experiments.
    """
    levels = cfg.get("levels", {})
    cavity_cfg = cfg.get("cavity", {})
    coupling_cfg = cfg.get("coupling", {})
    pump_cfg = cfg.get("pump", {})
    trunc_cfg = cfg.get("truncation", {})

    n_atomic = int(levels.get("n_atomic", 2))
    if n_atomic < 2:
        raise ConfigError("n_atomic must be at least 2")
    lifetime = _get(levels, "lifetime_pl", "time", default=11.6e-9)
    zpl_wavelength = _get(levels, "zpl_wavelength", "length", default=638e-9)
    omega_zpl = 2 * math.pi * 299792458.0 / zpl_wavelength
    n_ground = n_atomic - 1

    if n_ground == 1:
        branching = [1.0]
    else:
        if "branching" not in levels:
            raise ConfigError(
                "multi-level schemes need [levels] branching = [...] "
                "(radiative branching ratios, one per ground sublevel, summing to 1); "
                "no authoritative table ships with this package"
            )
        branching = [float(b) for b in levels["branching"]]
        if len(branching) != n_ground:
            raise ConfigError(f"branching needs {n_ground} entries, got {len(branching)}")
        if any(b < 0 for b in branching) or not math.isclose(sum(branching), 1.0, rel_tol=1e-6):
            raise ConfigError("branching ratios must be non-negative and sum to 1 (within 1e-6)")
        total = sum(branching)
        branching = [b / total for b in branching]

    vib = _get(levels, "vibrational_quantum", "angular_frequency", default=9.1e13)
    phonon_rate = _get(levels, "phonon_rate", "frequency", default=1e11)
    total_rate = 0.0 if math.isinf(lifetime) else 1.0 / lifetime
    scheme = NVLevelScheme(
        ground_energies=tuple(i * vib for i in range(n_ground)),
        excited_energy=omega_zpl,
        radiative_rates=tuple(total_rate * b for b in branching),
        phonon_rates=tuple(phonon_rate for _ in range(max(n_ground - 1, 0))),
    )

    resonant = int(cavity_cfg.get("resonant_transition", 0))
    if not 0 <= resonant < n_ground:
        raise ConfigError(f"resonant_transition {resonant} out of range")
    q = parse_quantity(cavity_cfg.get("quality_factor", 36500), "dimensionless", "quality_factor")
    n_refr = parse_quantity(
        cavity_cfg.get("refractive_index", 2.4), "dimensionless", "refractive_index"
    )
    lambda_c = 2 * math.pi * 299792458.0 / scheme.transition_frequency(resonant)

    if "mode_volume" in cavity_cfg and "mode_volume_lambda3" in cavity_cfg:
        raise ConfigError("give mode_volume or mode_volume_lambda3, not both")
    if "mode_volume" in cavity_cfg:
        volume = _get(cavity_cfg, "mode_volume", "volume")
    else:
        mult = parse_quantity(
            cavity_cfg.get("mode_volume_lambda3", 1.0), "dimensionless", "mode_volume_lambda3"
        )
        convention = cavity_cfg.get("volume_lambda_convention", "free_space")
        if convention == "free_space":
            volume = mult * lambda_c**3
        elif convention == "in_medium":
            volume = mult * (lambda_c / n_refr) ** 3
        else:
            raise ConfigError(
                f"volume_lambda_convention must be 'free_space' or 'in_medium', got {convention!r}"
            )
    cavity = CavityConfig(
        wavelength=lambda_c,
        quality_factor=q,
        mode_volume=volume,
        refractive_index=n_refr,
        resonant_transition=resonant,
    )

    given = [k for k in ("couplings", "dipoles", "kappa_to_coupling_ratio") if k in coupling_cfg]
    if len(given) != 1:
        raise ConfigError(
            "[coupling] needs exactly one of: couplings, dipoles, kappa_to_coupling_ratio"
        )
    if given[0] == "couplings":
        vals = [
            parse_quantity(v, "angular_frequency", "couplings") for v in coupling_cfg["couplings"]
        ]
    elif given[0] == "dipoles":
        vals = [
            coupling_from_dipole(parse_quantity(v, "dipole", "dipoles"), cavity)
            for v in coupling_cfg["dipoles"]
        ]
    else:
        ratio = parse_quantity(
            coupling_cfg["kappa_to_coupling_ratio"], "dimensionless", "kappa_to_coupling_ratio"
        )
        if ratio <= 0:
            raise ConfigError("kappa_to_coupling_ratio must be positive")
        vals = [0.0] * n_ground
        vals[resonant] = kappa_from_q(cavity) / ratio
    if len(vals) != n_ground:
        raise ConfigError(f"need {n_ground} couplings, got {len(vals)}")
    coupling = CouplingSpec(tuple(vals))

    pump = PumpPulse(
        rate=_get(pump_cfg, "rate", "frequency", default=0.0),
        width=_get(pump_cfg, "width", "time", default=1e-12),
        t_start=_get(pump_cfg, "t_start", "time", default=0.0),
        rep_period=rep_period
        if rep_period is not None
        else _get(pump_cfg, "rep_period", "time", default=None),
    )

    subset = trunc_cfg.get("atomic_subset")
    truncation = Truncation(
        n_cavity=int(trunc_cfg.get("n_cavity", 1)),
        n_waveguide=int(trunc_cfg.get("n_waveguide", 1)),
        atomic_subset=tuple(subset) if subset is not None else None,
    )
    try:
        return SystemModel(
            scheme=scheme, cavity=cavity, coupling=coupling, pump=pump, truncation=truncation
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def model_fingerprint(model: SystemModel) -> str:
    """Stable short hash of every physical parameter of the model."""
    payload = {
        "ground_energies": list(model.scheme.ground_energies),
        "excited_energy": model.scheme.excited_energy,
        "radiative_rates": list(model.scheme.radiative_rates),
        "phonon_rates": list(model.scheme.phonon_rates),
        "wavelength": model.cavity.wavelength,
        "quality_factor": model.cavity.quality_factor,
        "mode_volume": model.cavity.mode_volume,
        "refractive_index": model.cavity.refractive_index,
        "resonant_transition": model.cavity.resonant_transition,
        "couplings": list(model.coupling.couplings),
        "pump": [model.pump.rate, model.pump.width, model.pump.t_start, model.pump.rep_period],
        "truncation": [
            model.truncation.n_cavity,
            model.truncation.n_waveguide,
            list(model.truncation.atomic_subset or []),
        ],
    }
    blob = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI run bit for bit."""

    subcommand: str
    config_path: str
    config: dict
    seed: int
    threads: int
    long_mode: bool
    outputs: list[str]
    tool_version: str = __version__

    def save(self, path) -> None:
        payload = {
            "tool": "nvcavity",
            "tool_version": self.tool_version,
            "subcommand": self.subcommand,
            "config_path": self.config_path,
            "config": _canonical(self.config),
            "seed": self.seed,
            "threads": self.threads,
            "long_mode": self.long_mode,
            "outputs": self.outputs,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        return cls(
            subcommand=data["subcommand"],
            config_path=data["config_path"],
            config=data["config"],
            seed=data["seed"],
            threads=data["threads"],
            long_mode=data["long_mode"],
            outputs=data["outputs"],
            tool_version=data.get("tool_version", "unknown"),
        )
