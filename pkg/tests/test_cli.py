import subprocess
import sys
from dataclasses import fields
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcflow.cli import main
from dcflow.errors import ParseError
from dcflow.experiment import ExperimentConfig, dump_experiment, load_experiment, parse_experiment

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "experiments").glob("*.cfg"))
EXPECTED_EXIT = {"ricci_equivalence_rk4": 3}  # tol_curvature = 0 runs to t_max on purpose


# ------------------------------------------------------------ exit codes

def test_flow_writes_trace_and_summary(tmp_path, capsys):
    trace, summary = tmp_path / "t.csv", tmp_path / "s.txt"
    code = main(["flow", "--preset", "tetra_sphere", "--structure", "cp-euclidean", "--s", "1",
                 "--target", "uniform", "--trace", str(trace), "--summary", str(summary)])
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("t,calabi_energy,sum_u,min_angle,lambda_min,lambda_max,flips,K_0")
    assert len(lines) > 2
    text = summary.read_text()
    assert "converged=true" in text and "format=1" in text
    assert text in capsys.readouterr().out


def test_check_reports_spectrum(capsys):
    assert main(["check", "--preset", "one_vertex_torus", "--structure", "vs-euclidean"]) == 0
    out = capsys.readouterr().out
    assert "eigenvalues: 0" in out and "kernel_dimension: 1" in out
    assert "structure_condition: ok" in out and "delaunay: ok" in out


@pytest.mark.parametrize("target", ["0.1", "0.1,0.1,0.1,0.1"])
def test_bad_target_is_validation_error(target, capsys):
    assert main(["flow", "--preset", "tetra_sphere", "--target", target]) == 1
    assert "InvalidTarget" in capsys.readouterr().err


def test_step_failure_exit(capsys):
    code = main(["flow", "--preset", "tetra_sphere", "--degeneracy-margin", "10", "--dt-min", "1e-3"])
    assert code == 2
    assert "StepFailure" in capsys.readouterr().err


def test_not_converged_exit():
    assert main(["flow", "--preset", "tetra_sphere", "--t-max", "0.05"]) == 3


@pytest.mark.parametrize("argv", [[], ["bogus"], ["flow", "--preset", "no_such_mesh"], ["flow", "--s", "x"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["flow", "--config", str(tmp_path / "absent.cfg")]) == 1
    assert "absent.cfg" in capsys.readouterr().err


def test_preset_list(capsys):
    assert main(["preset-list"]) == 0
    out = capsys.readouterr().out
    for name in ("tetra_sphere", "icosahedron", "one_vertex_torus", "genus2_one_vertex", "flat_torus_16"):
        assert name in out


def test_sweep_table(capsys):
    assert main(["sweep", "--preset", "tetra_sphere", "--s-values=-1,0,1", "--jobs", "2"]) == 0
    rows = [r.split() for r in capsys.readouterr().out.splitlines()[1:]]
    assert [r[0] for r in rows] == ["-1", "0", "1"]
    for r in rows:
        assert r[1] == "converged"
        assert float(r[3]) == pytest.approx(float(r[4]), rel=0.05)


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "dcflow.cli", "preset-list"], capture_output=True, text=True)
    assert out.returncode == 0 and "tetra_sphere" in out.stdout


# ---------------------------------------------------------------- config

def test_parse_error_location():
    with pytest.raises(ParseError) as info:
        parse_experiment("format = 1\nmesh = preset:tetra_sphere\nthis line is wrong\n")
    assert (info.value.line, info.value.column) == (3, 1)
    assert "line 3" in str(info.value)
    with pytest.raises(ParseError) as info:
        parse_experiment("format = 1\ns = abc\n")
    assert (info.value.line, info.value.column) == (2, 5)
    with pytest.raises(ParseError) as info:
        parse_experiment("format = 1\ncolour = red\n")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        parse_experiment("mesh = preset:icosahedron\n")
    with pytest.raises(ParseError):
        parse_experiment("format = 2\n")


def test_comments_and_blanks():
    cfg = parse_experiment("# header\nformat = 1\n\n  s = 0.5   # trailing\n")
    assert cfg.s == 0.5 and cfg == ExperimentConfig(s=0.5)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_round_trip_fixpoint(path):
    cfg = load_experiment(path)
    again = parse_experiment(dump_experiment(cfg))
    assert again == cfg
    assert dump_experiment(again) == dump_experiment(cfg)


@given(s=st.floats(-3, 3), t_max=st.floats(1e-3, 1e4), frozen=st.booleans(),
       integrator=st.sampled_from(["rk4", "rk45"]), surgery=st.sampled_from(["off", "delaunay", "weighted_delaunay"]))
def test_round_trip_random(s, t_max, frozen, integrator, surgery):
    cfg = ExperimentConfig(s=s, t_max=t_max, frozen_initial_curvature=frozen, integrator=integrator,
                           surgery=surgery, u0="random(4, -0.25, 0.25)")
    assert parse_experiment(dump_experiment(cfg)) == cfg


def test_every_field_is_dumped():
    text = dump_experiment(ExperimentConfig(trace="a.csv", summary="b.txt"))
    keys = {line.split("=")[0].strip() for line in text.splitlines()}
    assert keys == {f.name for f in fields(ExperimentConfig)} | {"format"}


# ------------------------------------------------------------ determinism

def test_fixed_step_traces_are_byte_identical(tmp_path):
    argv = ["flow", "--preset", "icosahedron", "--u0", "random(42, -0.5, 0.5)", "--integrator", "rk4",
            "--dt-init", "0.02", "--t-max", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(argv + ["--trace", str(a)])
    main(argv + ["--trace", str(b)])
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------- replay

@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_checked_in_experiments_replay(path, tmp_path):
    code = main(["flow", "--config", str(path), "--trace", str(tmp_path / "t.csv")])
    assert code == EXPECTED_EXIT.get(path.stem, 0)
    assert (tmp_path / "t.csv").stat().st_size > 0
