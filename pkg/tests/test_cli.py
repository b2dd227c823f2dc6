import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from flab.cli import main


def _schema(name):
    return json.loads(resources.files("flab").joinpath(f"schemas/{name}").read_text())


def test_check_pass_writes_valid_json(tmp_path):
    out = tmp_path / "r.json"
    code = main(["check", "kahler", "--metric", "fubini_study", "--n", "2", "--samples", "20",
                 "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("report.schema.json"))
    assert doc["status"] == "pass" and doc["samples"] == 20


def test_check_fail_exit_code(tmp_path):
    code = main(["check", "kahler", "--metric", "hermitian_nonkahler", "--samples", "10",
                 "--out", str(tmp_path / "r.json")])
    assert code == 1


def test_hypothesis_unverified_exit_code(tmp_path):
    code = main(["compare", "laplacian", "--metric", "complex_hyperbolic", "--lambda", "1",
                 "--radii", "0.3:0.3:1", "--directions", "2", "--out", str(tmp_path / "r.json")])
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["check", "kahler", "--metric", "no_such_metric"],
    ["check", "kahler", "--metric", "hermitian_nonkahler", "--n", "3"],
    ["geodesic", "--metric", "euclidean", "--n", "1", "--from", "0,0", "--dir", "1,0,0",
     "--len", "1"],
])
def test_error_exit_code(argv, capsys):
    assert main(argv) == 3
    assert "flab: error" in capsys.readouterr().err


def test_reports_are_byte_identical(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        main(["check", "cross_engine", "--metric", "fubini_study", "--samples", "10", "--seed",
              "7", "--out", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_csv_format(tmp_path):
    out = tmp_path / "r.csv"
    main(["compare", "laplacian", "--metric", "euclidean", "--n", "2", "--lambda", "0",
          "--radii", "0.5,1.0", "--directions", "2", "--format", "csv", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0].startswith("direction,r,status")
    assert len(lines) == 5


def test_plotdata_format(tmp_path):
    out = tmp_path / "p.dat"
    code = main(["compare", "laplacian", "--metric", "fubini_study", "--n", "2", "--lambda", "1",
                 "--radii", "0.2:0.6:3", "--directions", "2", "--format", "plotdata",
                 "--out", str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0] == "# r box_perp bound_box_perp HVV bound_hvv"


def test_geodesic_csv(capsys):
    assert main(["geodesic", "--metric", "euclidean", "--n", "1", "--from", "0,0",
                 "--dir", "[2, 0]", "--len", "1", "--samples", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,x1,x2,xdot1,xdot2"
    assert [float(v) for v in lines[-1].split(",")] == pytest.approx([1.0, 1.0, 0.0, 1.0, 0.0])


def test_tensors_dump(capsys):
    assert main(["tensors", "--metric", "fubini_study", "--n", "1",
                 "--at", '{"x": [0.1, 0.2], "y": [1.0, 0.5]}']) == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(doc, _schema("tensors.schema.json"))
    assert doc["complex"]["H"][0] == pytest.approx(4.0, abs=1e-8)


def test_dump_jets(tmp_path):
    jets = tmp_path / "jets.json"
    main(["check", "homogeneity", "--metric", "euclidean", "--n", "1", "--samples", "3",
          "--out", str(tmp_path / "r.json"), "--dump-jets", str(jets)])
    assert "partials" in json.loads(jets.read_text())


def test_bad_thread_setting(monkeypatch, tmp_path):
    monkeypatch.setenv("FLAB_THREADS", "many")
    code = main(["compare", "volume", "--metric", "euclidean", "--n", "1", "--lambda", "0",
                 "--directions", "4", "--radial", "4", "--out", str(tmp_path / "v.json")])
    assert code == 3


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "flab.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.startswith("flab ")
