import json

import numpy as np
import pytest

from rankscatter.cli import main, read_groups
from rankscatter.exceptions import ParseError


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def two_groups(tmp_path):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((60, 2))
    rows = ["group,x,y"] + [f"a,{u:.6f},{v:.6f}" for u, v in x[:30]] + \
        [f"b,{u:.6f},{v:.6f}" for u, v in 2 * x[30:]]
    return write(tmp_path / "two.csv", "\n".join(rows) + "\n")


@pytest.mark.parametrize("body, row", [
    ("group,x,y\na,1,2\nb,1\n", 3),
    ("group,x,y\na,1,2\nb,1,oops\n", 3),
    ("group,x,y\na,1,2\na,3,4\nb,nan,1\n", 4),
])
def test_read_groups_reports_line(tmp_path, body, row):
    with pytest.raises(ParseError) as err:
        read_groups(write(tmp_path / "bad.csv", body))
    assert err.value.row == row
    assert f"line {row}" in str(err.value)


def test_read_groups_layout(tmp_path):
    path = write(tmp_path / "g.csv", "x,label,y\n1,q,2\n3,p,4\n5,q,6\n")
    labels, features, groups = read_groups(path, group_column="label")
    assert labels == ["q", "p"] and features == ["x", "y"]
    np.testing.assert_array_equal(groups[0], [[1, 2], [5, 6]])
    with pytest.raises(ParseError):
        read_groups(write(tmp_path / "one.csv", "group,x\na,1\na,2\n"))
    with pytest.raises(ParseError):
        read_groups(path, group_column="missing")


def test_identical_groups_give_zero_statistic(tmp_path, capsys):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((25, 2))
    rows = ["group,x,y"] + [f"{g},{float(u)!r},{float(v)!r}" for g in "ab" for u, v in x]
    path = write(tmp_path / "same.csv", "\n".join(rows) + "\n")
    with pytest.warns(RuntimeWarning, match="ties"):
        assert main(["test", path, "--tests", "vdw,spearman", "--output", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    for rep in payload["reports"]:
        assert rep["statistic"] == pytest.approx(0.0, abs=1e-10)
        assert rep["p_value"] == pytest.approx(1.0, abs=1e-10)
        assert rep["reject"] is False


def test_json_payload(two_groups, capsys):
    code = main(["test", two_groups, "--tests", "vdw,pseudo-gaussian,mlrt",
                 "--output", "json", "--critval", "vdW=9.5"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["schema_version"] == 1
    assert payload["groups"] == ["a", "b"] and payload["sizes"] == [30, 30]
    assert len(payload["frame"]["shape"]) == 2 and len(payload["frame"]["locations"]) == 2
    vdw, pg, box = payload["reports"]
    assert vdw["df"] == pg["df"] == box["df"] == 3
    assert vdw["critical_value"] == 9.5 and vdw["critical_value_mode"] != "asymptotic"
    assert vdw["statistic"] == pytest.approx(vdw["scale_part"] + vdw["shape_part"])


def test_table_output(two_groups, capsys):
    assert main(["test", two_groups, "--tests", "wilcoxon,gaussian"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("groups: a, b (n = 30, 30)")
    assert "median radial distance" in out and ("reject" in out or "accept" in out)


def test_bad_inputs_exit_nonzero(tmp_path, capsys):
    assert main(["test", str(tmp_path / "missing.csv")]) == 1
    bad = write(tmp_path / "bad.csv", "group,x\na,1\nb,zz\n")
    assert main(["test", bad]) == 1
    assert "parse error" in capsys.readouterr().err


def test_are(capsys, tmp_path):
    assert main(["are", "--k", "2", "--scores", "vdw", "--densities", "t5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["score,k,density,xi0_are,xi1_are", "vdW,2,t5,2.551,2.204"]
    assert main(["are", "--k", "2", "--densities", "student:4"]) == 1
    assert "nu > 4" in capsys.readouterr().err
    out = tmp_path / "are.csv"
    assert main(["are", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 1 + 3 * 6 * 7


def test_simulate(capsys, tmp_path):
    assert main(["simulate", "--list"]) == 0
    assert "table2_gaussian" in capsys.readouterr().out.split()
    assert main(["simulate"]) == 1
    prefix = str(tmp_path / "run")
    assert main(["simulate", "table2_gaussian", "--replications", "20", "--out", prefix]) == 0
    out = capsys.readouterr().out
    assert out.startswith("table2_gaussian: scale alternatives")
    assert (tmp_path / "run.csv").read_text().count("\n") > 1
    plan = json.dumps({"k": 2, "group_sizes": [20, 20], "kind": "triangle"})
    assert main(["simulate", write(tmp_path / "p.json", plan)]) == 1
    assert "key: kind" in capsys.readouterr().err


def test_calibrate(capsys):
    assert main(["calibrate", "--score", "vdw,spearman", "--ncal", "1000",
                 "--n1", "30", "--n2", "30"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split("\t")[0] for ln in lines] == ["vdW", "SP"]
    assert all(4 < float(ln.split("\t")[1]) < 12 for ln in lines)
    assert main(["calibrate", "--ncal", "10"]) == 1
