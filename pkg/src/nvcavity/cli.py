"""Command-line front end: config in, figure-ready CSV out.

Subcommands map one-to-one onto the experiments the library supports:

* ``sweep``    -- closed-form photon statistics over a pulse-parameter grid
* ``emit``     -- pulsed emission dynamics (populations, flux, spectrum)
* ``channels`` -- channel-resolved emission vs cavity quality factor
* ``hbt``      -- pulse-train coincidence histogram and per-trigger counts
* ``analytic`` -- point evaluations of the design formulas
* ``rerun``    -- re-execute a run from its manifest, bit for bit

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import emission_spectrum, overall_damping_rate, pulse_param_sweep
from .config import ConfigError, RunManifest, build_model, load_config, model_fingerprint, parse_quantity
from .hbt import HBTConfig, simulate_hbt
from .mcsolve import ensemble_average, write_jump_records
from .mesolve import IntegratorConfig, StiffnessError, channel_resolved_sweep, integrate
from .model import kappa_from_q, purcell_factor, spontaneous_coupling_beta


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header_lines: list[str], columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _config_echo(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)


def _grid(section: dict, prefix: str, dimension: str) -> np.ndarray:
    try:
        lo = parse_quantity(section[f"{prefix}_min"], dimension, f"{prefix}_min")
        hi = parse_quantity(section[f"{prefix}_max"], dimension, f"{prefix}_max")
        n = int(section[f"{prefix}_points"])
    except KeyError as exc:
        raise ConfigError(f"missing sweep key {exc.args[0]!r}") from None
    if n < 1:
        raise ConfigError(f"{prefix}_points must be at least 1")
    if lo <= 0 or hi < lo:
        raise ConfigError(f"bad {prefix} grid bounds [{lo}, {hi}]")
    scale = section.get(f"{prefix}_scale", "log")
    if scale == "log":
        return np.logspace(math.log10(lo), math.log10(hi), n)
    if scale == "linear":
        return np.linspace(lo, hi, n)
    raise ConfigError(f"{prefix}_scale must be 'log' or 'linear'")


def _integrator(cfg: dict) -> tuple[IntegratorConfig, float]:
    sec = cfg.get("integrator", {})
    try:
        icfg = IntegratorConfig(
            method=sec.get("method", "adaptive-rk45"),
            rel_tol=float(sec.get("rel_tol", 1e-9)),
            abs_tol=float(sec.get("abs_tol", 1e-12)),
            record_dt=parse_quantity(sec.get("record_dt", "1 ps"), "time", "record_dt"),
        )
    except ValueError as exc:
        raise ConfigError(f"bad [integrator] section: {exc}") from None
    t_final = parse_quantity(sec.get("t_final", "500 ps"), "time", "t_final")
    return icfg, t_final


def cmd_sweep(cfg: dict, out: Path, seed: int, threads: int, long_mode: bool) -> list[str]:
    model = build_model(cfg)
    sec = cfg.get("sweep", {})
    widths = _grid(sec, "width", "time")
    rates = _grid(sec, "rate", "frequency")
    coupling = model.coupling.couplings[model.cavity.resonant_transition]
    mark = None
    if "mark_width" in sec and "mark_rate" in sec:
        mark = (
            parse_quantity(sec["mark_width"], "time", "mark_width"),
            parse_quantity(sec["mark_rate"], "frequency", "mark_rate"),
        )
    grid, marked = pulse_param_sweep(widths, rates, coupling, mark=mark)

    header = [
        f"nvcavity {__version__} sweep",
        f"model={model_fingerprint(model)} coupling_rad_per_s={coupling!r}",
        f"config={_config_echo(cfg)}",
    ]
    if "practical_width_cutoff" in sec:
        cutoff = parse_quantity(sec["practical_width_cutoff"], "time", "practical_width_cutoff")
        header.append(f"practical_width_cutoff_s={cutoff!r}")
    if marked is not None:
        header.append(
            f"operating_point T_s={marked.pulse_width!r} r0_hz={marked.pump_rate!r} "
            f"P0={marked.stats.p0!r} P1={marked.stats.p1!r} Pmulti={marked.stats.p_multi!r}"
        )
    rows = [
        (p.pulse_width, p.pump_rate, p.stats.p0, p.stats.p1, p.stats.p_multi, p.stats.n_bar)
        for p in grid
    ]
    path = out / "sweep.csv"
    _write_csv(path, header, ["T_s", "r0_hz", "P0", "P1", "Pmulti", "nbar"], rows)
    return [str(path)]


def cmd_emit(cfg: dict, out: Path, seed: int, threads: int, long_mode: bool) -> list[str]:
    model = build_model(cfg)
    icfg, t_final = _integrator(cfg)
    result = integrate(model, t_final=t_final, cfg=icfg)

    fingerprint = model_fingerprint(model)
    header = [
        f"nvcavity {__version__} emit",
        f"model={fingerprint}",
        f"config={_config_echo(cfg)}",
    ]
    obs_names = sorted(result.populations)
    columns = ["time_s"] + obs_names + ["intensity_1_per_s"]
    rows = [
        [t] + [result.populations[k][i] for k in obs_names] + [result.intensity[i]]
        for i, t in enumerate(result.times)
    ]
    paths = []
    path = out / "emission.csv"
    _write_csv(path, header, columns, rows)
    paths.append(str(path))

    path = out / "channel_integrals.csv"
    _write_csv(
        path,
        header,
        ["channel", "probability"],
        sorted(result.channel_integrals.items()),
    )
    paths.append(str(path))

    spectrum_cfg = cfg.get("spectrum", {})
    convention = spectrum_cfg.get("convention", "intensity")
    spectrum = emission_spectrum(
        result.times, result.intensity, model.cavity.wavelength, convention=convention
    )
    # window the line to +-10 FWHM and cap the row count; full resolution
    # stays available through the library API
    keep = np.flatnonzero(
        np.abs(spectrum.frequencies) <= 10.0 * max(abs(spectrum.fwhm_frequency), 1.0)
    )
    stride = max(1, len(keep) // 4000)
    keep = keep[::stride]
    path = out / "spectrum.csv"
    _write_csv(
        path,
        header
        + [
            f"convention={convention} fwhm_hz={spectrum.fwhm_frequency!r} "
            f"fwhm_nm={spectrum.fwhm_wavelength * 1e9!r}"
        ],
        ["freq_hz", "power"],
        zip(spectrum.frequencies[keep], spectrum.power[keep]),
    )
    paths.append(str(path))

    summary = {
        "model": fingerprint,
        "integral_ww": result.integral_ww,
        "mean_emission_time_s": result.mean_emission_time,
        "peak_emission_time_s": result.peak_emission_time,
        "fwhm_nm": spectrum.fwhm_wavelength * 1e9,
        "spectrum_convention": convention,
        "max_trace_defect": result.max_trace_defect,
        "max_hermiticity_defect": result.max_hermiticity_defect,
        "min_eigenvalue": result.min_eigenvalue,
    }

    overlay_n = int(cfg.get("emission", {}).get("overlay_trajectories", 0))
    if overlay_n > 0:
        ens = ensemble_average(
            model,
            t_final=t_final,
            n_traj=overlay_n,
            seed0=seed,
            record_dt=icfg.record_dt,
            n_threads=threads,
        )
        path = out / "emission_trajectory.csv"
        centers = 0.5 * (ens.bin_edges[:-1] + ens.bin_edges[1:])
        _write_csv(
            path,
            header + [f"n_traj={overlay_n} seed={seed}"],
            ["time_s", "emission_rate_1_per_s", "std_error_1_per_s"],
            zip(centers, ens.emission_rate, ens.emission_rate_se),
        )
        paths.append(str(path))
        path = out / "jumps.csv"
        write_jump_records(path, ens.records)
        paths.append(str(path))

    path = out / "emission_summary.json"
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(str(path))
    return paths


def cmd_channels(cfg: dict, out: Path, seed: int, threads: int, long_mode: bool) -> list[str]:
    if int(cfg.get("levels", {}).get("n_atomic", 2)) < 3:
        raise ConfigError(
            "the channel sweep needs the multi-level scheme: set [levels] n_atomic = 11 "
            "and provide branching ratios"
        )
    if int(cfg.get("truncation", {}).get("n_waveguide", 1)) != 0:
        raise ConfigError(
            "channel sweeps need [truncation] n_waveguide = 0 so emitted photons "
            "leave the model instead of filling the waveguide mode"
        )
    model = build_model(cfg)
    sec = cfg.get("channels", {})
    qs = _grid(sec, "q", "dimensionless")
    sweep = channel_resolved_sweep(model, qs, n_threads=threads)

    tags = sorted({tag for per_q in sweep.values() for tag in per_q})
    header = [
        f"nvcavity {__version__} channels",
        f"model={model_fingerprint(model)}",
        f"config={_config_echo(cfg)}",
    ]
    rows = []
    for q in sorted(sweep):
        per = sweep[q]
        rows.append([q] + [per.get(tag, 0.0) for tag in tags])
    path = out / "channels.csv"
    _write_csv(path, header, ["q"] + tags, rows)
    return [str(path)]


def cmd_hbt(cfg: dict, out: Path, seed: int, threads: int, long_mode: bool) -> list[str]:
    sec = cfg.get("hbt", {})
    if "rep_rate" not in sec:
        raise ConfigError("missing [hbt] rep_rate")
    rep_rate = parse_quantity(sec["rep_rate"], "frequency", "rep_rate")
    total_key = "long_total_time" if long_mode else "total_time"
    if total_key not in sec:
        raise ConfigError(f"missing [hbt] {total_key}")
    try:
        hcfg = HBTConfig(
            rep_rate=rep_rate,
            total_time=parse_quantity(sec[total_key], "time", total_key),
            bin_width=parse_quantity(sec.get("bin_width", "10 ps"), "time", "bin_width"),
            splitter_ratio=float(sec.get("splitter_ratio", 0.5)),
            seed=seed,
            window_periods=int(sec.get("window_periods", 10)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad [hbt] section: {exc}") from None
    model = build_model(cfg, rep_period=hcfg.rep_period)
    result = simulate_hbt(model, hcfg)

    header = [
        f"nvcavity {__version__} hbt",
        f"model={model_fingerprint(model)} seed={seed}",
        f"config={_config_echo(cfg)}",
    ]
    paths = []
    path = out / "histogram.csv"
    _write_csv(path, header, ["delay_s", "counts"], zip(result.histogram.delays, result.histogram.counts))
    paths.append(str(path))

    path = out / "jumps.csv"
    write_jump_records(path, [result.record])
    paths.append(str(path))

    sidecar = {
        "model": model_fingerprint(model),
        "seed": seed,
        "rep_rate_hz": hcfg.rep_rate,
        "total_time_s": hcfg.total_time,
        "bin_width_s": hcfg.bin_width,
        "splitter_ratio": hcfg.splitter_ratio,
        "n_pulses": hcfg.n_pulses,
        "n_detected": result.n_detected,
        "per_trigger_probabilities": {str(k): v for k, v in result.per_trigger.probabilities.items()},
        "per_trigger_std_errors": {str(k): v for k, v in result.per_trigger.std_errors.items()},
        "single_photon_probability": result.per_trigger.single_photon_probability,
        "multi_photon_probability": result.per_trigger.multi_photon_probability,
        "zero_delay_ratio": result.zero_delay_ratio,
        "config": cfg,
    }
    path = out / "hbt_summary.json"
    with open(path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    paths.append(str(path))
    return paths


def cmd_analytic(cfg: dict, out: Path, seed: int, threads: int, long_mode: bool) -> list[str]:
    model = build_model(cfg)
    kappa = kappa_from_q(model.cavity)
    coupling = model.coupling.couplings[model.cavity.resonant_transition]
    values = {
        "cavity_angular_frequency_rad_per_s": model.cavity.angular_frequency,
        "kappa_1_per_s": kappa,
        "resonant_coupling_rad_per_s": coupling,
        "purcell_factor": purcell_factor(model.cavity),
        "spontaneous_coupling_beta": spontaneous_coupling_beta(model.cavity),
    }
    damp = cfg.get("damping")
    if damp is not None:
        values["overall_damping_rate_1_per_s"] = overall_damping_rate(
            gamma_g0g1=parse_quantity(damp.get("gamma_g0g1", "0 Hz"), "frequency", "gamma_g0g1"),
            gamma_gmgn=parse_quantity(damp.get("gamma_gmgn", "0 Hz"), "frequency", "gamma_gmgn"),
            coupling=parse_quantity(damp["coupling"], "angular_frequency", "coupling")
            if "coupling" in damp
            else coupling,
            omega_c=model.cavity.angular_frequency,
            quality_factor=model.cavity.quality_factor,
        )
    for k in sorted(values):
        print(f"{k}={values[k]!r}")
    path = out / "analytic.json"
    with open(path, "w") as fh:
        json.dump(values, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [str(path)]


_COMMANDS = {
    "sweep": cmd_sweep,
    "emit": cmd_emit,
    "channels": cmd_channels,
    "hbt": cmd_hbt,
    "analytic": cmd_analytic,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvcavity", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nvcavity {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--long-mode", action="store_true", help="run the long-horizon variant")
    p = sub.add_parser("rerun")
    p.add_argument("manifest", help="manifest.json of a previous run")
    p.add_argument("--out", default="rerun", help="output directory")
    return parser


def _execute(subcommand: str, cfg: dict, config_path: str, out: Path, seed: int, threads: int, long_mode: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    outputs = _COMMANDS[subcommand](cfg, out, seed, threads, long_mode)
    manifest = RunManifest(
        subcommand=subcommand,
        config_path=config_path,
        config=cfg,
        seed=seed,
        threads=threads,
        long_mode=long_mode,
        outputs=[str(Path(p).name) for p in outputs],
    )
    manifest.save(out / "manifest.json")
    for p in outputs:
        print(p)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.subcommand == "rerun":
            manifest = RunManifest.load(args.manifest)
            return _execute(
                manifest.subcommand,
                manifest.config,
                manifest.config_path,
                Path(args.out),
                manifest.seed,
                manifest.threads,
                manifest.long_mode,
            )
        cfg = load_config(args.config)
        return _execute(
            args.subcommand,
            cfg,
            str(args.config),
            Path(args.out),
            args.seed,
            args.threads,
            args.long_mode,
        )
    except ConfigError as exc:
        print(f"nvcavity: error: {exc}", file=sys.stderr)
        return 2
    except (StiffnessError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"nvcavity: error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"nvcavity: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
