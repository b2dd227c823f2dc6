import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest

from flab.report import Report, emit, plotdata, rows_to_csv, summarize, to_jsonable


def _schema(name):
    return json.loads(resources.files("flab").joinpath(f"schemas/{name}").read_text())


def _report(**kw):
    base = dict(check="demo", metric="euclidean(2)", seed=0, samples=4,
                residuals=[1e-12, 3e-12, np.nan, 2e-12], tolerance=1e-9)
    base.update(kw)
    return Report(**base)


def test_summary_ignores_nan():
    s = summarize([1.0, np.nan, 3.0])
    assert s["count"] == 2 and s["max"] == 3.0 and s["mean"] == 2.0
    assert math.isnan(summarize([])["max"])


def test_status_logic():
    assert _report().status == "pass"
    assert _report(tolerance=1e-12).status == "fail"
    assert _report(hypothesis_ok=False).status == "hypothesis unverified"
    assert _report(failures=1).status == "error"
    assert _report(samples=1000, failures=10).status == "pass"


def test_json_matches_schema_and_excludes_runtime():
    rep = _report(details={"z": 1 + 2j, "a": np.float64(np.nan), "v": np.arange(3)},
                  runtime=12.5)
    doc = json.loads(rep.to_json())
    jsonschema.validate(doc, _schema("report.schema.json"))
    assert "runtime" not in doc
    assert doc["details"]["z"] == [1.0, 2.0]
    assert doc["details"]["a"] is None
    assert rep.to_json() == _report(details=rep.details, runtime=0.1).to_json()


def test_csv_and_plotdata():
    rows = [{"r": 0.5, "value": 1.0}, {"r": 1.0, "value": 2.0}]
    text = rows_to_csv(rows)
    assert text.splitlines() == ["r,value", "0.5,1.0", "1.0,2.0"]
    text = plotdata({"r": [0.5, 1.0], "bound": [1.0, np.inf]})
    assert text.splitlines()[-1].startswith("# pole")
    with pytest.raises(ValueError):
        emit(_report(), "plotdata")
    with pytest.raises(ValueError):
        emit(_report(), "xml")


def test_emit_writes_file(tmp_path):
    path = tmp_path / "r.json"
    text = emit(_report(), "json", path)
    assert path.read_text() == text
    assert to_jsonable({"k": (np.int64(2),)}) == {"k": [2]}
