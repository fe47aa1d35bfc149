import json
import subprocess
import sys

import numpy as np
import pytest

from specklevar.cli import main
from specklevar.stack import read_map, read_stack

SCENARIO = {
    "shape": [40, 2, 24, 24],
    "tau": 0.5,
    "seed": 7,
    "ps_pixels": [[2, 2], [10, 12], [20, 5]],
    "change_pixels": [[y, 15] for y in range(24)],
    "change_frame": 20,
    "change_gain": 4.0,
}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "s.json").write_text(json.dumps(SCENARIO))
    assert main(["simulate", "--scenario", "s.json", "--out", "stack"]) == 0
    return tmp_path


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_then_compute(workdir):
    assert (workdir / "stack.json").exists() and (workdir / "stack_change_truth.json").exists()
    assert main(["amplitudes", "--input", "stack.json", "--out", "amp"]) == 0
    assert main(["compute", "--input", "amp.json", "--estimator", "az", "--mode", "temporal",
                 "--out", "g_az"]) == 0
    g = read_map("g_az.json")
    assert g.shape == (24, 24) and g.valid.all()
    manifest = json.loads((workdir / "g_az.manifest.json").read_text())
    assert manifest["subcommand"] == "compute"
    assert manifest["parameters"]["estimator"] == "az"
    assert manifest["outputs"] == ["g_az.json"]
    assert manifest["version"] and manifest["wall_time_s"] >= 0
    sim_manifest = json.loads((workdir / "stack.manifest.json").read_text())
    assert sim_manifest["seed"] == 7


def test_even_window_is_precondition_error(workdir, capsys):
    main(["amplitudes", "--input", "stack.json", "--out", "amp"])
    code = main(["compute", "--input", "amp.json", "--estimator", "vn", "--mode", "spatial",
                 "--window", "4", "--out", "x"])
    assert code == 65
    assert _err(capsys)["code"] == 65


def test_compare_same_map_prints_one(workdir, capsys):
    main(["amplitudes", "--input", "stack.json", "--out", "amp"])
    main(["compute", "--input", "amp.json", "--out", "a"])
    capsys.readouterr()
    assert main(["compare", "--pearson", "a.json", "a.json"]) == 0
    assert float(capsys.readouterr().out.strip()) == 1.0


def test_exit_codes(workdir, capsys):
    assert main(["compute", "--bogus"]) == 64
    assert _err(capsys)["error"] == "usage"
    assert main(["frobnicate"]) == 64
    assert main(["compute", "--input", "missing.json", "--out", "x"]) == 66
    (workdir / "bad.json").write_text("{")
    assert main(["compute", "--input", "bad.json", "--out", "x"]) == 66
    # complex input to an estimator
    assert main(["compute", "--input", "stack.json", "--out", "x"]) == 65
    # single channel out of range
    main(["amplitudes", "--input", "stack.json", "--out", "amp"])
    assert main(["compute", "--input", "amp.json", "--estimator", "single", "--channel", "5",
                 "--out", "x"]) == 65
    assert main(["stokes", "--input", "amp.json", "--out", "x"]) == 65


def test_full_pipeline(workdir, capsys):
    run = [
        ["amplitudes", "--input", "stack.json", "--out", "amp"],
        ["amplitudes", "--input", "stack.json", "--squared", "--out", "int"],
        ["stokes", "--input", "stack.json", "--out", "st"],
        ["compute", "--input", "amp.json", "--estimator", "az", "--out", "g_az"],
        ["compute", "--input", "amp.json", "--estimator", "r", "--out", "g_r"],
        ["compute", "--input", "int.json", "--estimator", "single", "--channel", "1",
         "--mode", "spatial", "--window", "5", "--frame", "3", "--out", "g_s"],
        ["vmai", "--input", "st.json", "--estimator", "vv", "--out", "vm"],
        ["dop", "--input", "st.json", "--out", "dop"],
        ["dop", "--input", "stack.json", "--out", "dop2"],
        ["invdop", "--input", "dop.json", "--out", "idop"],
        ["reactiv", "--input", "stack.json", "--out", "rc"],
        ["detect", "--input", "g_az.json", "--threshold", "0.7", "--polarity", "high", "--out", "det"],
        ["eval", "--input", "g_az.json", "--truth", "stack_change_truth.json", "--polarity", "high",
         "--out", "roc_change"],
        ["eval", "--input", "g_r.json", "--truth", "stack_ps_truth.json", "--polarity", "low",
         "--out", "roc_ps"],
        ["render", "--input", "idop.json", "--stretch", "p2_98", "--out", "idop"],
        ["compare", "--pearson", "idop.json", "vm.json", "--out", "cmp"],
    ]
    for argv in run:
        assert main(argv) == 0, argv
    assert read_map("vm.json").saturated is not None
    # dop2 skips the float32 Stokes file, so only agrees to single precision
    np.testing.assert_allclose(read_map("dop.json").values, read_map("dop2.json").values, rtol=1e-5)
    assert json.loads((workdir / "roc_ps.json").read_text())["auc"] == 1.0
    assert json.loads((workdir / "roc_change.json").read_text())["auc"] > 0.9
    assert (workdir / "rc.png").exists() and (workdir / "idop.png").exists()
    assert "pearson" in json.loads((workdir / "cmp.manifest.json").read_text())


def _outputs(workdir, names):
    return {n: (workdir / n).read_bytes() for n in names}


def test_idempotent_and_thread_invariant(workdir, monkeypatch):
    main(["stokes", "--input", "stack.json", "--out", "st"])
    files = ["g.raw", "g.valid.raw", "g.json"]
    outputs = []
    for extra in (["--threads", "1"], ["--threads", "4"], ["--threads", "4"], []):
        assert main(["compute", "--input", "st.json", "--estimator", "vn", "--out", "g", *extra]) == 0
        outputs.append(_outputs(workdir, files))
    monkeypatch.setenv("SPECKLEVAR_THREADS", "3")
    assert main(["compute", "--input", "st.json", "--estimator", "vn", "--out", "g"]) == 0
    outputs.append(_outputs(workdir, files))
    assert all(o == outputs[0] for o in outputs)


def test_simulate_seed_override_and_threads(workdir):
    assert main(["simulate", "--scenario", "s.json", "--seed", "99", "--threads", "1", "--out", "a"]) == 0
    assert main(["simulate", "--scenario", "s.json", "--seed", "99", "--threads", "3", "--out", "b"]) == 0
    assert (workdir / "a.raw").read_bytes() == (workdir / "b.raw").read_bytes()
    assert (workdir / "a.raw").read_bytes() != (workdir / "stack.raw").read_bytes()
    assert json.loads((workdir / "a.scenario.json").read_text())["seed"] == 99


def test_rerun_from_manifest(workdir):
    main(["amplitudes", "--input", "stack.json", "--out", "amp"])
    main(["compute", "--input", "amp.json", "--estimator", "r", "--out", "g"])
    first = (workdir / "g.raw").read_bytes()
    argv = json.loads((workdir / "g.manifest.json").read_text())["argv"]
    (workdir / "g.raw").unlink()
    assert main(argv) == 0
    assert (workdir / "g.raw").read_bytes() == first


def test_console_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "specklevar.cli", "compare", "--pearson",
                           "stack_ps_truth.json", "stack_ps_truth.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert float(proc.stdout) == 1.0
    proc = subprocess.run([sys.executable, "-m", "specklevar.cli", "render", "--input", "x.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 64
    assert json.loads(proc.stderr)["code"] == 64
