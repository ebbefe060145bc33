"""End-to-end tests of the command-line front end."""

import subprocess
import sys

import numpy as np
import pytest

from skewflow import cli
from skewflow import diffgeo as dg


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def column(path, name, cast=float):
    header, rows = read_csv(path)
    i = header.index(name)
    return [cast(r[i]) for r in rows]


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def test_unknown_key_exits_2(tmp_path, capsys):
    code = cli.main(["sphere-run", "m=1", "l=2", "a=1", "b=1", "bogus=3",
                     "--out", str(tmp_path)])
    assert code == 2
    assert "unknown keys" in capsys.readouterr().err


def test_missing_required_key_exits_2(tmp_path, capsys):
    code = cli.main(["sphere-run", "m=1", "l=2", "a=1", "--out", str(tmp_path)])
    assert code == 2
    assert "missing required" in capsys.readouterr().err


def test_bad_value_exits_2(tmp_path, capsys):
    code = cli.main(["sphere-run", "m=1.5", "l=2", "a=1", "b=1", "--out", str(tmp_path)])
    assert code == 2


def test_domain_error_exits_2(tmp_path, capsys):
    code = cli.main(["membrane-run", "surface=torus_product", "a=-1", "b=2",
                     "--out", str(tmp_path)])
    assert code == 2


def test_config_file_with_cli_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[sphere-run]\nm: 1\nl: 2\na: 1\nb: 1\nmode: fixed\nT: 0.5\n")
    out = tmp_path / "out"
    code = cli.main(["sphere-run", "--config", str(cfg), "--out", str(out),
                     "--dt", "1e-3", "--T", "0.25"])
    assert code == 0
    ts = column(out / "sphere.csv", "t")
    assert abs(ts[-1] - 0.25) < 1e-12


def test_config_file_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[sphere-run]\nm: 1\nl: 2\na: 1\nb: 1\nT: 0.5\nwhatever: 3\n")
    code = cli.main(["sphere-run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def test_sphere_run_to_collapse(tmp_path):
    out = tmp_path / "sphere"
    code = cli.main(["sphere-run", "m=1", "l=2", "a=1", "b=1", "dt=1e-3",
                     "mode=to-collapse", "a_stop=1e-6", "stride=10",
                     "--out", str(out)])
    assert code == 0
    ts = column(out / "sphere.csv", "t")
    a = column(out / "sphere.csv", "a")
    assert abs(ts[-1] - (1.0 - 1e-3)) < 5e-3  # a(t) = (1-t)^2 stops at 1 - sqrt(a_stop)
    assert a[-1] <= 1e-6
    manifest = (out / "manifest.txt").read_text()
    assert "subcommand sphere-run" in manifest
    assert "config_sha256" in manifest


def test_filament_run_willmore_column_constant(tmp_path):
    out = tmp_path / "fil"
    code = cli.main(["filament-run", "shape=circle", "R=1", "T=1", "dt=1e-3",
                     "N=128", "--out", str(out)])
    assert code == 0
    w = column(out / "diagnostics.csv", "willmore")
    assert max(abs(x / w[0] - 1.0) for x in w) <= 1e-4


def test_byte_identical_reruns(tmp_path):
    args = ["sphere-run", "m=1", "l=1", "a=1", "b=2", "dt=1e-3", "T=0.2"]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    assert (out1 / "sphere.csv").read_bytes() == (out2 / "sphere.csv").read_bytes()


def test_nls_run_plane_wave(tmp_path):
    out = tmp_path / "nls"
    code = cli.main(["nls-run", "source=plane", "A=1", "M=64", "T=0.5", "dt=1e-2",
                     "--out", str(out)])
    assert code == 0
    mass = column(out / "diagnostics.csv", "mass")
    assert abs(mass[-1] / mass[0] - 1.0) < 1e-12


def test_fluid_and_darios_runs(tmp_path):
    out = tmp_path / "fluid"
    code = cli.main(["fluid-run", "shape=perturbed_circle", "N=128", "dt=2e-4",
                     "T=0.01", "--out", str(out)])
    assert code == 0
    mass = column(out / "diagnostics.csv", "mass")
    assert abs(mass[-1] / mass[0] - 1.0) < 1e-10

    out2 = tmp_path / "darios"
    code = cli.main(["darios-run", "shape=perturbed_circle", "N=128", "dt=2e-4",
                     "T=0.01", "--out", str(out2)])
    assert code == 0
    header, rows = read_csv(out2 / "fields.csv")
    assert header == ["t", "index", "s", "kappa", "tau"]


def test_membrane_run_snapshots_reload(tmp_path):
    out = tmp_path / "mem"
    code = cli.main(["membrane-run", "surface=torus_product", "a=1", "b=2",
                     "n1=16", "n2=16", "dt=2e-3", "T=0.02", "stride=5",
                     "--out", str(out)])
    assert code == 0
    imm = dg.load_immersion(out / "snapshot_0000.txt")
    assert imm.shape == (16, 16)
    a = np.hypot(imm.points[..., 0], imm.points[..., 1])
    assert np.abs(a - 1.0).max() < 1e-14
    header, _ = read_csv(out / "diagnostics.csv")
    assert header == ["t", "willmore", "volume", "a_extracted", "b_extracted",
                      "max_continuity_residual", "max_momentum_residual", "energy_gap"]


def test_curve_file_input(tmp_path):
    from skewflow import filament as fl

    curve = fl.arclength_resample(fl.perturbed_circle(1.0, 0.05, 3, 128))
    snap = tmp_path / "curve.txt"
    dg.save_immersion(fl.curve_to_immersion(curve), snap)
    out = tmp_path / "fil"
    code = cli.main(["filament-run", "shape=circle", f"curve_file={snap}",
                     "dt=2e-4", "T=0.01", "--out", str(out)])
    assert code == 0
    w = column(out / "diagnostics.csv", "willmore")
    assert abs(w[0] - fl.willmore_1d(curve)) < 1e-5


# ---------------------------------------------------------------------------
# crosscheck
# ---------------------------------------------------------------------------

def test_crosscheck_filament_square(tmp_path):
    out = tmp_path / "cc"
    code = cli.main(["crosscheck", "mode=filament-square", "N=128", "dt=2e-4",
                     "T=0.02", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out / "crosscheck.csv")
    assert header == ["pair", "linf_gap", "tol", "status"]
    assert all(r[3] == "pass" for r in rows)
    assert len(rows) == 6


def test_crosscheck_degenerate_marks_singular_exit_zero(tmp_path):
    # eps (1 + k^2) = 1: curvature touches zero, the curvature/torsion and
    # fluid corners abort, the wave corner survives, exit stays 0
    out = tmp_path / "ccd"
    code = cli.main(["crosscheck", "mode=filament-square", "eps=0.1", "k=3",
                     "N=256", "dt=1e-4", "T=0.05", "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "crosscheck.csv")
    status = {r[0]: r[3] for r in rows}
    assert "singular" in status["filament/darios"]
    assert status["filament/nls"] == "pass"


def test_crosscheck_sphere_membrane(tmp_path):
    out = tmp_path / "ccm"
    code = cli.main(["crosscheck", "mode=sphere-membrane", "a=1", "b=2",
                     "n1=16", "n2=16", "dt=1e-3", "T=0.02", "order=2",
                     "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "crosscheck.csv")
    assert {r[0] for r in rows} == {"radius_a", "radius_b"}
    assert all(r[3] == "pass" for r in rows)


# ---------------------------------------------------------------------------
# validate subcommand (cheap subset; the full suite runs in test_acceptance)
# ---------------------------------------------------------------------------

def test_validate_subset(tmp_path, capsys):
    out = tmp_path / "val"
    code = cli.main(["validate", "suite=1,2,12", "--out", str(out)])
    captured = capsys.readouterr().out
    assert code == 0
    assert captured.count("PASS") == 3
    header, rows = read_csv(out / "validate.csv")
    assert [r[2] for r in rows] == ["pass"] * 3


def test_entry_point_version():
    res = subprocess.run(
        [sys.executable, "-m", "skewflow.cli", "--version"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert "skewflow" in res.stdout
