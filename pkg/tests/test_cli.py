import csv
import json
import shutil
from pathlib import Path

import pytest

from nvcavity.cli import main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], rows[1:]


def header_comments(path):
    with open(path) as fh:
        return [line[2:].strip() for line in fh if line.startswith("#")]


def make_config(tmp_path, base, replacements=()):
    text = (CONFIG_DIR / base).read_text()
    for old, new in replacements:
        assert old in text
        text = text.replace(old, new)
    p = tmp_path / base
    p.write_text(text)
    return p


@pytest.fixture()
def fast_sweep_config(tmp_path):
    return make_config(
        tmp_path,
        "pulse_sweep.toml",
        [("width_points = 60", "width_points = 8"), ("rate_points = 40", "rate_points = 5")],
    )


def test_sweep_writes_expected_columns_and_operating_point(tmp_path, fast_sweep_config, capsys):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(fast_sweep_config), "--out", str(out)]) == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header == ["T_s", "r0_hz", "P0", "P1", "Pmulti", "nbar"]
    assert len(rows) == 8 * 5
    for row in rows:
        vals = [float(x) for x in row]  # every cell numeric, no unit suffixes
        assert 0.0 <= vals[2] <= 1.0
    comments = "\n".join(header_comments(out / "sweep.csv"))
    assert "operating_point" in comments
    assert "P1=0.99628" in comments
    assert (out / "manifest.json").exists()


def test_sweep_empty_grid_is_usage_error(tmp_path):
    cfg = make_config(tmp_path, "pulse_sweep.toml", [("width_points = 60", "width_points = 0")])
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


@pytest.fixture()
def fast_emit_config(tmp_path):
    # two-level reduction keeps the CLI test fast; physics is unchanged
    return make_config(
        tmp_path,
        "emission.toml",
        [
            ("n_atomic = 11", "n_atomic = 2"),
            (
                "branching = [0.036964, 0.121982, 0.201271, 0.221398, 0.182653, 0.120551, 0.066303, 0.031257, 0.012894, 0.004728]\n",
                "",
            ),
        ],
    )


def test_emit_outputs(tmp_path, fast_emit_config):
    out = tmp_path / "out"
    assert main(["emit", "--config", str(fast_emit_config), "--out", str(out)]) == 0
    header, rows = read_csv(out / "emission.csv")
    assert header[0] == "time_s"
    assert "rho_WW" in header and "pop_e" in header
    assert header[-1] == "intensity_1_per_s"
    assert len(rows) == 501

    summary = json.loads((out / "emission_summary.json").read_text())
    assert 0.98 <= summary["integral_ww"] <= 1.0
    assert 55e-12 <= summary["peak_emission_time_s"] <= 85e-12
    assert 0.005 <= summary["fwhm_nm"] <= 0.02

    h2, rows2 = read_csv(out / "channel_integrals.csv")
    assert h2 == ["channel", "probability"]
    tags = [r[0] for r in rows2]
    assert "cavity-out" in tags and "pump" in tags

    h3, rows3 = read_csv(out / "spectrum.csv")
    assert h3 == ["freq_hz", "power"]
    assert any("fwhm_nm=" in c for c in header_comments(out / "spectrum.csv"))


def test_emit_with_trajectory_overlay(tmp_path, fast_emit_config):
    text = fast_emit_config.read_text().replace(
        "overlay_trajectories = 0", "overlay_trajectories = 25"
    )
    p = fast_emit_config.parent / "emit_overlay.toml"
    p.write_text(text)
    out = fast_emit_config.parent / "ovout"
    assert main(["emit", "--config", str(p), "--out", str(out), "--seed", "5"]) == 0
    header, rows = read_csv(out / "emission_trajectory.csv")
    assert header == ["time_s", "emission_rate_1_per_s", "std_error_1_per_s"]
    assert len(rows) > 100
    jh, jrows = read_csv(out / "jumps.csv")
    assert jh == ["traj_index", "seed", "t_jump_s", "channel_tag"]
    assert len(jrows) > 20


@pytest.fixture()
def fast_channels_config(tmp_path):
    return make_config(tmp_path, "channel_sweep.toml", [("q_points = 19", "q_points = 5")])


def test_channels_outputs(tmp_path, fast_channels_config):
    out = tmp_path / "out"
    assert main(["channels", "--config", str(fast_channels_config), "--out", str(out)]) == 0
    header, rows = read_csv(out / "channels.csv")
    assert header[0] == "q"
    assert "cavity-loss" in header
    assert len(rows) == 5
    cav_col = header.index("cavity-loss")
    rad_cols = [i for i, h in enumerate(header) if h.startswith("radiative:")]
    assert len(rad_cols) == 10
    for row in rows:
        total = float(row[cav_col]) + sum(float(row[i]) for i in rad_cols)
        assert abs(total - 1.0) < 1e-6


def test_channels_zero_coupling_column(tmp_path):
    cfg = make_config(
        tmp_path,
        "channel_sweep.toml",
        [
            ("q_points = 19", "q_points = 3"),
            ('couplings = ["1.617771e10 rad/s"', 'couplings = ["0 rad/s"'),
        ],
    )
    out = tmp_path / "out"
    assert main(["channels", "--config", str(cfg), "--out", str(out)]) == 0
    header, rows = read_csv(out / "channels.csv")
    cav = header.index("cavity-loss")
    assert all(abs(float(r[cav])) < 1e-9 for r in rows)


def test_channels_requires_branching(tmp_path):
    cfg = make_config(
        tmp_path,
        "channel_sweep.toml",
        [("n_atomic = 11", "n_atomic = 2")],
    )
    rc = main(["channels", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2


@pytest.fixture()
def fast_hbt_config(tmp_path):
    return make_config(tmp_path, "hbt.toml", [('total_time = "5 us"', 'total_time = "0.5 us"')])


def test_hbt_outputs_and_seed_determinism(tmp_path, fast_hbt_config):
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    for out in (out1, out2):
        assert main(["hbt", "--config", str(fast_hbt_config), "--out", str(out), "--seed", "3"]) == 0
    assert (out1 / "histogram.csv").read_bytes() == (out2 / "histogram.csv").read_bytes()
    assert (out1 / "jumps.csv").read_bytes() == (out2 / "jumps.csv").read_bytes()

    assert main(["hbt", "--config", str(fast_hbt_config), "--out", str(out3), "--seed", "4"]) == 0
    assert (out1 / "jumps.csv").read_bytes() != (out3 / "jumps.csv").read_bytes()

    summary = json.loads((out1 / "hbt_summary.json").read_text())
    assert summary["n_pulses"] == 500
    assert summary["single_photon_probability"] > 0.95
    header, rows = read_csv(out1 / "histogram.csv")
    assert header == ["delay_s", "counts"]


def test_hbt_missing_rep_rate(tmp_path, fast_hbt_config):
    text = fast_hbt_config.read_text().replace('rep_rate = "1 GHz"\n', "")
    p = fast_hbt_config.parent / "norate.toml"
    p.write_text(text)
    assert main(["hbt", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_analytic_values_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["analytic", "--config", str(CONFIG_DIR / "pulse_sweep.toml"), "--out", str(out)]) == 0
    values = json.loads((out / "analytic.json").read_text())
    assert values["purcell_factor"] == pytest.approx(200.64, rel=1e-3)
    assert values["spontaneous_coupling_beta"] == pytest.approx(0.99504, rel=1e-4)
    assert values["kappa_1_per_s"] == pytest.approx(4.044427e10, rel=1e-6)
    assert values["resonant_coupling_rad_per_s"] == pytest.approx(1.617771e10, rel=1e-6)
    printed = capsys.readouterr().out
    assert "purcell_factor=" in printed


def test_analytic_damping_regime_violation_is_numerical_error(tmp_path):
    text = (CONFIG_DIR / "pulse_sweep.toml").read_text()
    text += '\n[damping]\ngamma_g0g1 = "1e15 Hz"\ngamma_gmgn = "0 Hz"\n'
    p = tmp_path / "bad_damping.toml"
    p.write_text(text)
    assert main(["analytic", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_rerun_reproduces_outputs_bit_for_bit(tmp_path, fast_hbt_config):
    out = tmp_path / "orig"
    assert main(["hbt", "--config", str(fast_hbt_config), "--out", str(out), "--seed", "8"]) == 0
    rerun_out = tmp_path / "again"
    assert main(["rerun", str(out / "manifest.json"), "--out", str(rerun_out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (out / name).read_bytes() == (rerun_out / name).read_bytes()


def test_rerun_survives_config_deletion(tmp_path, fast_sweep_config):
    out = tmp_path / "orig"
    assert main(["sweep", "--config", str(fast_sweep_config), "--out", str(out)]) == 0
    moved = tmp_path / "elsewhere.json"
    shutil.copy(out / "manifest.json", moved)
    fast_sweep_config.unlink()
    rerun_out = tmp_path / "again"
    assert main(["rerun", str(moved), "--out", str(rerun_out)]) == 0
    assert (out / "sweep.csv").read_bytes() == (rerun_out / "sweep.csv").read_bytes()


def test_channels_requires_no_waveguide(tmp_path):
    cfg = make_config(tmp_path, "channel_sweep.toml", [("n_waveguide = 0", "n_waveguide = 1")])
    assert main(["channels", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_bad_integrator_section_is_config_error(tmp_path, fast_emit_config):
    text = fast_emit_config.read_text().replace(
        'method = "adaptive-rk45"', 'method = "leapfrog"'
    )
    p = fast_emit_config.parent / "bad_method.toml"
    p.write_text(text)
    assert main(["emit", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_bad_hbt_splitter_is_config_error(tmp_path, fast_hbt_config):
    text = fast_hbt_config.read_text().replace("splitter_ratio = 0.5", "splitter_ratio = 1.5")
    p = fast_hbt_config.parent / "bad_split.toml"
    p.write_text(text)
    assert main(["hbt", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
