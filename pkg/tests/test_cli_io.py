import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigenshape import io as eio
from eigenshape.cli import EXIT_FAIL, EXIT_OK, EXIT_STALL, EXIT_USAGE, main
from eigenshape.config import ConfigError, RunConfig, parse_number
from eigenshape.eigensolve import Spectrum, analytic_spectrum
from eigenshape.grid_geometry import Grid, disk_phi, make_shape
from eigenshape.svg import line_plot


def small_config(tmp_path, **opt):
    cfg = {
        "grid": {"lower": [-1.2, -1.2], "upper": [1.2, 1.2], "h": "1/24"},
        "init": {"type": "disk", "center": [0.0, 0.0], "radius": 0.8},
        "objective": {"form": "linear", "mu": [1.0]},
        "optimizer": dict({"max_steps": 2}, **opt),
        "diagnostics": {"sample_cap": 8},
        "seed": 7,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


# -- binary round trips -------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(nx=st.integers(8, 14), ny=st.integers(8, 14), h=st.floats(1e-3, 1.0), seed=st.integers(0, 2 ** 32 - 1))
def test_shape_round_trip_bit_exact(tmp_path_factory, nx, ny, h, seed):
    g = Grid((nx, ny), h, (-0.3, 0.7))
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal(g.dims) * 10.0 ** rng.integers(-300, 300, g.dims)
    phi.flat[0], phi.flat[-1] = -1.0, 1.0
    path = tmp_path_factory.mktemp("rt") / "s.lsshape"
    eio.save_shape(path, make_shape(g, phi, {"note": "x"}), step=5)
    back = eio.load_shape(path)
    assert back.grid == g
    assert back.phi.tobytes() == phi.tobytes()
    assert back.metadata["step"] == 5 and back.metadata["note"] == "x"


def test_spectrum_round_trip_bit_exact(tmp_path):
    g = Grid((9, 8), 0.1, (0.0, 0.0))
    rng = np.random.default_rng(1)
    sp = Spectrum(np.array([1 / 3, math.pi, 1e-300]), rng.standard_normal((3,) + g.dims),
                  np.array([1e-12, 2e-11, 0.0]), g)
    eio.save_spectrum(tmp_path / "spec.json", sp)
    back = eio.load_spectrum(tmp_path / "spec.json")
    assert back.eigenvalues.tobytes() == sp.eigenvalues.tobytes()
    assert back.residuals.tobytes() == sp.residuals.tobytes()
    assert back.eigenfunctions.tobytes() == sp.eigenfunctions.tobytes()
    assert (tmp_path / "spec.u3.lsfield").exists()


def test_corrupt_files_raise(tmp_path):
    g = Grid((8, 8), 0.25, (0.0, 0.0))
    path = tmp_path / "s.lsshape"
    eio.save_shape(path, make_shape(g, disk_phi(g, (0.9, 0.9), 0.6)))
    raw = path.read_bytes()
    (tmp_path / "magic").write_bytes(b"XXXXXXXX" + raw[8:])
    (tmp_path / "short").write_bytes(raw[:-8])
    (tmp_path / "long").write_bytes(raw + b"\0" * 8)
    for name in ("magic", "short", "long"):
        with pytest.raises(eio.FormatError):
            eio.load_shape(tmp_path / name)


def test_to_json_nulls_nonfinite():
    doc = json.loads(eio.to_json({"a": math.nan, "b": [np.float64(1.5), np.inf], "c": np.True_}))
    assert doc == {"a": None, "b": [1.5, None], "c": True}


def test_svg_is_well_formed():
    import xml.etree.ElementTree as ET
    text = line_plot([("a", [0.1, 0.2, 0.4], [1.0, 0.5, 0.25]), ("b", [0.1], [math.nan])],
                     "t<1>", "r", "f", logx=True, logy=True)
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1


# -- configuration ------------------------------------------------------------------

def test_parse_number():
    assert parse_number("1/128") == 1 / 128
    assert parse_number(0.25) == 0.25
    for bad in ("one", True, None):
        with pytest.raises(ConfigError):
            parse_number(bad)


def test_run_config_rejects_bad_documents(tmp_path):
    path = small_config(tmp_path)
    good = json.loads(path.read_text())
    assert RunConfig.from_dict(good).optimizer.seed == 7
    for mutate in (lambda d: d.pop("grid"),
                   lambda d: d["optimizer"].update(bogus=1),
                   lambda d: d["init"].update(type="hexagon"),
                   lambda d: d.update(init={"type": "checkpoint", "path": "missing.lsshape"})):
        d = json.loads(path.read_text())
        mutate(d)
        with pytest.raises(ConfigError):
            RunConfig.from_dict(d, base=tmp_path).initial_shape()


# -- subcommands --------------------------------------------------------------------

def test_eig_square_passes(capsys):
    assert main(["eig", "--domain", "square", "--size", "1", "--N", "3", "--h", "1/128",
                 "--threshold", "0.005"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "k,computed,analytic,rel_error" and len(lines) == 4
    assert float(lines[1].split(",")[2]) == pytest.approx(2 * math.pi ** 2, rel=1e-12)


def test_eig_tight_threshold_fails(capsys):
    assert main(["eig", "--domain", "disk", "--size", "1", "--N", "1", "--h", "1/32",
                 "--threshold", "1e-5"]) == EXIT_FAIL


def test_eig_unknown_domain(capsys):
    assert main(["eig", "--domain", "triangle"]) == EXIT_USAGE


def test_baseline_prints_exact_values(capsys):
    assert main(["baseline", "--domain", "disk", "--size", "1", "--N", "2"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "k,analytic"
    assert float(out[1].split(",")[1]) == analytic_spectrum("disk", 2, 1.0)[0]


def test_usage_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["optimize", "--config", str(bad)]) == EXIT_USAGE
    assert main(["optimize"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["eig", "--seed", "-1"]) == EXIT_USAGE


@pytest.fixture(scope="module")
def optimize_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("opt")
    cfg = small_config(tmp, checkpoint_every=1)
    code = main(["optimize", "--config", str(cfg), "--out", str(tmp / "out")])
    return code, tmp / "out", cfg


def test_optimize_writes_artifacts(optimize_out):
    code, out, _ = optimize_out
    # two steps cannot converge from this init
    assert code == EXIT_STALL
    for name in ("history.csv", "final.lsshape", "final_spectrum.json", "final_spectrum.u1.lsfield",
                 "report.json", "profiles.csv", "checkpoints/step_000001.lsshape",
                 "checkpoints/step_000002.lsshape"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["steps"] == 2 and rep["converged"] is False
    assert set(rep["diagnostics"]) >= {"fb_residual_sup", "density", "skipped", "checks"}
    assert len((out / "history.csv").read_text().splitlines()) == 4


def test_optimize_is_deterministic(optimize_out, tmp_path):
    _, out, cfg = optimize_out
    main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "again"), "--threads", "4"])
    assert (tmp_path / "again" / "history.csv").read_bytes() == (out / "history.csv").read_bytes()


def test_diagnose_round_trip(optimize_out, tmp_path, capsys):
    _, out, _ = optimize_out
    args = ["diagnose", str(out / "final.lsshape"), "--spectrum", str(out / "final_spectrum.json"),
            "--out", str(tmp_path / "d")]
    assert main(args) in (EXIT_OK, EXIT_FAIL)
    assert (tmp_path / "d" / "report.json").exists()
    assert main(args + ["--no-thresholds"]) == EXIT_OK
    assert main(["diagnose", str(out / "final.lsshape"), "--recompute", "--no-thresholds",
                 "--out", str(tmp_path / "e")]) == EXIT_OK


def test_diagnose_fails_thresholds_on_unconverged(optimize_out, tmp_path, capsys):
    _, out, _ = optimize_out
    # fb residual of an off-optimum disk is far above target
    assert main(["diagnose", str(out / "checkpoints/step_000001.lsshape"), "--recompute",
                 "--out", str(tmp_path / "d")]) == EXIT_FAIL
    assert "fb_residual: FAIL" in capsys.readouterr().out


def test_diagnose_bad_magic(tmp_path, capsys):
    bad = tmp_path / "bad.lsshape"
    bad.write_bytes(b"NOTSHAPE" + bytes(64))
    assert main(["diagnose", str(bad)]) == EXIT_USAGE


def test_checkpoint_init_resumes(optimize_out, tmp_path):
    _, out, cfg = optimize_out
    d = json.loads(cfg.read_text())
    d["init"] = {"type": "checkpoint", "path": str(out / "final.lsshape")}
    d["optimizer"]["max_steps"] = 1
    path = tmp_path / "resume.json"
    path.write_text(json.dumps(d))
    assert main(["optimize", "--config", str(path), "--out", str(tmp_path / "r")]) in (EXIT_OK, EXIT_STALL)
    first = (out / "history.csv").read_text().splitlines()[-1].split(",")
    resumed = (tmp_path / "r" / "history.csv").read_text().splitlines()[1].split(",")
    # same shape in, same objective out
    assert resumed[3] == first[3]
