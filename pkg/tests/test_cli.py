import json
import subprocess
import sys

import pytest

from surfcut.cli import (EXIT_COMPUTE, EXIT_INPUT, EXIT_PARAM, EXIT_PATH, EXIT_USAGE,
                         build_parser, run)
from surfcut.mesh import read_obj
from surfcut.volume import read_svol

SEED = "20,20,20"


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run(["synth", "--kind", "trimmed-plane", "--dims", "40", "--sigma", "0.1",
                "--seed", "7", "--out", str(d)]) == 0
    return d


def _err(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_synth_outputs(data):
    assert {p.name for p in data.iterdir()} == {"phi.svol", "gt.json", "manifest.json"}
    man = json.loads((data / "manifest.json").read_text())
    (case,) = man["cases"]
    assert case["volume"] == "phi.svol" and case["gt"] == "gt.json"
    assert case["rng_seed"] == 7 and case["sigma"] == 0.1 and case["dims"] == [40, 40, 40]
    assert read_svol(data / "phi.svol").dims == (40, 40, 40)


def test_surfcut_and_eval(data, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["surfcut", "--phi", str(data / "phi.svol"), "--point", SEED,
                "--out", str(out)]) == 0
    assert (out / "boundary.json").exists()
    mesh = read_obj(out / "surface.obj")
    assert mesh.n_quads > 0 and len(mesh.boundary) > 0
    capsys.readouterr()
    assert run(["eval", "--result", str(out / "surface.obj"), "--boundary",
                str(out / "boundary.json"), "--gt", str(data / "gt.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["epsilon"] == 3.0
    assert rep["surface"]["F"] >= 0.9 and rep["boundary"]["F"] >= 0.8
    assert set(rep["surface"]) == {"P", "R", "F", "GT_Cov"}


def test_extract_steps_match_full_run(data, tmp_path):
    phi = str(data / "phi.svol")
    assert run(["surfcut", "--phi", phi, "--point", SEED, "--out", str(tmp_path / "full")]) == 0
    b, s = tmp_path / "b.json", tmp_path / "s.obj"
    assert run(["extract-boundary", "--phi", phi, "--point", SEED, "--out", str(b)]) == 0
    assert run(["extract-surface", "--phi", phi, "--point", SEED, "--boundary", str(b),
                "--out", str(s)]) == 0
    assert b.read_bytes() == (tmp_path / "full" / "boundary.json").read_bytes()
    assert s.read_bytes() == (tmp_path / "full" / "surface.obj").read_bytes()


def test_eval_text_format(data, tmp_path):
    out = tmp_path / "run"
    run(["surfcut", "--phi", str(data / "phi.svol"), "--point", SEED, "--out", str(out)])
    rep = tmp_path / "rep.txt"
    assert run(["eval", "--result", str(out / "boundary.json"), "--gt", str(data / "gt.json"),
                "--format", "text", "--epsilon", "2", "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert lines[0].split() == ["P", "R", "F", "GT_Cov"]
    assert lines[1].startswith("boundary") and lines[-1] == "epsilon = 2"


def test_fmm_writes_volumes(data, tmp_path):
    assert run(["fmm", "--phi", str(data / "phi.svol"), "--point", SEED,
                "--out", str(tmp_path)]) == 0
    U, UE = read_svol(tmp_path / "U.svol"), read_svol(tmp_path / "UE.svol")
    assert U.data[20, 20, 20] == 0.0 and UE.data[20, 20, 20] == 0.0
    assert U.dims == UE.dims == (40, 40, 40)


def test_missing_input(tmp_path, capsys):
    code = run(["surfcut", "--phi", str(tmp_path / "none.svol"), "--point", "1,1,1"])
    assert code == EXIT_PATH
    assert _err(capsys) == {"error": "path", "exit": EXIT_PATH,
                            "message": f"input file not found: {tmp_path / 'none.svol'}"}


def test_missing_output_dir(data, tmp_path, capsys):
    code = run(["extract-boundary", "--phi", str(data / "phi.svol"), "--point", SEED,
                "--out", str(tmp_path / "no" / "b.json")])
    assert code == EXIT_PATH and _err(capsys)["error"] == "path"


def test_malformed_volume(tmp_path, capsys):
    bad = tmp_path / "bad.svol"
    bad.write_bytes(b'{"dims":[4,4,4],"dtype":"f32le"}\n' + b"\0" * 10)
    assert run(["fmm", "--phi", str(bad), "--point", "1,1,1"]) == EXIT_INPUT
    assert _err(capsys)["error"] == "input"


def test_malformed_boundary(data, tmp_path, capsys):
    bad = tmp_path / "b.json"
    bad.write_text('{"lattice": [[0,0,0],[5,5,5]]}')
    code = run(["extract-surface", "--phi", str(data / "phi.svol"), "--point", SEED,
                "--boundary", str(bad), "--out", str(tmp_path / "s.obj")])
    assert code == EXIT_INPUT


@pytest.mark.parametrize("argv", [["--point", "0,20,20"], ["--point", SEED, "--T", "0"],
                                  ["--point", SEED, "--delta-D", "-1"]])
def test_param_violations(data, tmp_path, capsys, argv):
    code = run(["surfcut", "--phi", str(data / "phi.svol"), "--out", str(tmp_path)] + argv)
    assert code == EXIT_PARAM and _err(capsys)["error"] == "param"
    assert not (tmp_path / "surface.obj").exists()


@pytest.mark.parametrize("argv", [["surfcut", "--bogus"], ["surfcut", "--phi", "x.svol",
                                  "--point", "1,2"], ["nope"], []])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == EXIT_USAGE
    assert _err(capsys)["exit"] == EXIT_USAGE


def test_compute_failure(tmp_path, capsys):
    # the first front already lies outside the volume, so no curve pair exists
    from surfcut.volume import new_volume, write_svol
    p = tmp_path / "flat.svol"
    write_svol(p, new_volume((16, 16, 16), 1.0))
    code = run(["surfcut", "--phi", str(p), "--point", "8,8,8", "--delta-D", "1000",
                "--out", str(tmp_path)])
    assert code == EXIT_COMPUTE and _err(capsys)["error"] == "compute"


def test_degraded_run_still_succeeds(data, tmp_path):
    # T this small never fires, so fronts grow until they reach the volume border
    assert run(["surfcut", "--phi", str(data / "phi.svol"), "--point", SEED, "--T", "1e-6",
                "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "boundary.json").read_text())["meta"]
    assert meta["status"] == "degraded:domain"


def test_help_documents_defaults(capsys):
    for cmd in ("surfcut", "eval"):
        with pytest.raises(SystemExit):
            build_parser().parse_args([cmd, "--help"])
        text = capsys.readouterr().out
        assert "exit codes:" in text
        if cmd == "surfcut":
            assert "(default: 20.0)" in text and "(default: 5.0)" in text
        else:
            assert "(default: 3.0)" in text


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "surfcut", "fmm", "--phi",
                        str(tmp_path / "x.svol"), "--point", "1,1,1"],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_PATH
    assert json.loads(r.stderr.strip())["error"] == "path"
