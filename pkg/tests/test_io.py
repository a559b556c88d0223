import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fepca.analysis import analyze, default_dim_pairs
from fepca.core import Dataset
from fepca.dataio import (
    DataError,
    ResultBundle,
    ellipses_csv,
    read_coverage,
    read_csv,
    read_results,
    write_coverage,
    write_results,
)
from fepca.plot import render_svg
from fepca.simulation import CoverageEntry, CoverageTable

SVG = "{http://www.w3.org/2000/svg}"


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- csv


@pytest.mark.parametrize("delim", [",", ";", "\t"])
def test_read_detects_delimiter(tmp_path, delim):
    text = delim.join(["id", "a", "b"]) + "\n" + delim.join(["r1", "1", "2.5"]) + "\n" \
        + delim.join(["r2", "3", "-4"]) + "\n" + delim.join(["r3", "0", "1e2"]) + "\n"
    d = read_csv(write(tmp_path, text))
    assert d.col_labels == ("a", "b") and d.row_labels == ("r1", "r2", "r3")
    np.testing.assert_array_equal(d.values, [[1, 2.5], [3, -4], [0, 100]])


def test_semicolon_with_decimal_comma(tmp_path):
    d = read_csv(write(tmp_path, "id;a;b\nr1;1,5;2\nr2;3;4,25\nr3;0;0\n"), decimal=",")
    np.testing.assert_array_equal(d.values, [[1.5, 2], [3, 4.25], [0, 0]])


def test_non_numeric_reports_position(tmp_path):
    with pytest.raises(DataError, match=r"row 3, column 2 \(a\)"):
        read_csv(write(tmp_path, "id,a,b\nr1,1,2\nr2,x,4\n"))


def test_ragged_row(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        read_csv(write(tmp_path, "id,a,b\nr1,1\nr2,3,4\n"))


def test_missing_value_rejected(tmp_path):
    with pytest.raises(DataError):
        read_csv(write(tmp_path, "id,a,b\nr1,1,nan\nr2,3,4\n"))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        read_csv(tmp_path / "absent.csv")


def test_decathlon_shape(decathlon):
    assert decathlon.values.shape == (41, 10)
    assert decathlon.col_labels[0] == "100m"


# ---------------------------------------------------------------- bundles


@pytest.fixture(scope="module")
def bundle():
    g = np.random.default_rng(5)
    x = g.standard_normal((9, 2)) @ g.standard_normal((2, 5)) + 0.3 * g.standard_normal((9, 5))
    data = Dataset(x, tuple(f"r{i}" for i in range(9)), tuple("abcde"))
    return analyze(data, 3, "bootstrap", B=60, seed=1, columns=True)


def test_default_pairs():
    assert default_dim_pairs(2) == [(1, 2)]
    assert default_dim_pairs(4) == [(1, 2), (3, 4)]
    assert default_dim_pairs(3) == [(1, 2), (2, 3)]
    assert default_dim_pairs(1) == []


def test_bundle_records(bundle):
    assert len(bundle.ellipsoids_for((1, 2))) == 9
    assert len(bundle.ellipsoids_for((1, 2, 3))) == 9
    assert len(bundle.ellipsoids_for((1, 2), side="column")) == 5
    assert bundle.n_replicates == 60


def test_bundle_roundtrip(tmp_path, bundle):
    files = write_results(bundle, tmp_path / "out")
    assert sorted(f.name for f in files) == ["ellipses.csv", "loadings.csv", "results.json", "scores.csv"]
    back = read_results(tmp_path / "out")
    assert back == bundle
    assert back.to_json() == bundle.to_json()


def test_bundle_empty_ellipsoids(bundle):
    d = bundle.to_dict()
    d["ellipsoids"] = []
    back = ResultBundle.from_dict(json.loads(json.dumps(d)))
    assert back.ellipsoids == []
    assert ellipses_csv(back).count("\n") == 1


def test_ellipses_csv_rows(bundle):
    lines = ellipses_csv(bundle).splitlines()
    row_12 = [ln for ln in lines[1:] if ln.startswith("row,") and ",1,2," in ln]
    assert len(row_12) == 9


def test_bad_results_file(tmp_path):
    p = write(tmp_path, '{"method": "x"}', "results.json")
    with pytest.raises(DataError):
        read_results(p)


def test_coverage_files(tmp_path):
    table = CoverageTable([CoverageEntry("bootstrap", "sigma=1", 9, 10, [9])])
    files = write_coverage(table, tmp_path)
    assert {f.name for f in files} == {"coverage.csv", "coverage.json"}
    assert read_coverage(tmp_path / "coverage.json").to_json() == table.to_json()


# ---------------------------------------------------------------- svg


def test_svg_well_formed(bundle):
    root = ET.fromstring(render_svg(bundle))
    assert root.tag == SVG + "svg"
    assert len(root.findall(f".//{SVG}path")) == 9
    assert len(root.findall(f".//{SVG}circle")) == 9
    texts = [t.text for t in root.iter(SVG + "text")]
    for lab in texts[:2]:
        pct = float(lab.split("(")[1].rstrip("%)"))
        assert 0 <= pct <= 100


def test_svg_no_labels_and_columns(bundle):
    root = ET.fromstring(render_svg(bundle, labels=False, side="column"))
    assert len(root.findall(f".//{SVG}circle")) == 5
    assert len(root.findall(f".//{SVG}text")) == 2


def test_svg_deterministic(bundle):
    assert render_svg(bundle) == render_svg(bundle)


def test_svg_single_point(bundle):
    d = bundle.to_dict()
    d["row_labels"] = d["row_labels"][:1]
    d["scores"] = d["scores"][:1]
    d["ellipsoids"] = [e for e in d["ellipsoids"] if e["label"] == "r0" and e["side"] == "row"]
    root = ET.fromstring(render_svg(ResultBundle.from_dict(d)))
    assert len(root.findall(f".//{SVG}path")) == 1


def test_svg_rejects_bad_dims(bundle):
    with pytest.raises(ValueError):
        render_svg(bundle, dims=(1, 4))
