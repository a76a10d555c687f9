from __future__ import annotations

import json
import re
import warnings

import numpy as np
import pytest

from bdd.cli import run_command
from bdd.data import Dataset, load_boundary, load_dataset
from bdd.errors import DataError
from bdd.geometry import BoundaryPolyline, make_grid
from bdd.pipeline import BandwidthPolicy, EstimatorConfig, estimate_curve
from bdd.serialize import dumps_json, fmt_real
from bdd.sim import make_dgp

L_CSV = "x1,x2\n-2,0\n0,0\n0,2\n"


def _write_data(path, d: Dataset, with_t=True):
    rows = ["x1,x2,y,t" if with_t else "x1,x2,y"]
    for (a, b), y, t in zip(d.x, d.y, d.treated):
        cells = [fmt_real(a), fmt_real(b), fmt_real(y)] + ([str(int(t))] if with_t else [])
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n")


@pytest.fixture()
def files(tmp_path):
    b = tmp_path / "b.csv"
    b.write_text(L_CSV)
    d = tmp_path / "d.csv"
    _write_data(d, make_dgp("linear").sample(2000, 7))
    return tmp_path, d, b


def _run(argv, capsys):
    code = run_command([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_load_small_dataset(tmp_path):
    b = tmp_path / "b.csv"
    b.write_text(L_CSV)
    d = tmp_path / "d.csv"
    d.write_text("x1,x2,y,t\n-1,1,0.5,1\n1,-1,0.2,0\n1,1,0.3,0\n")
    ds = load_dataset(d, load_boundary(b), standardize=False)
    assert ds.n == 3
    np.testing.assert_array_equal(ds.treated, [True, False, False])


def test_nan_row_is_named(tmp_path):
    d = tmp_path / "d.csv"
    d.write_text("x1,x2,y\n-1,1,0.5\n1,-1,NaN\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(d, BoundaryPolyline.from_vertices([(-2, 0), (0, 0), (0, 2)]))


def test_missing_column(tmp_path):
    d = tmp_path / "d.csv"
    d.write_text("x1,y\n1,2\n")
    with pytest.raises(DataError, match="x2"):
        load_dataset(d, BoundaryPolyline.from_vertices([(-2, 0), (0, 0), (0, 2)]))


def test_t_mismatch_and_override(tmp_path):
    boundary = BoundaryPolyline.from_vertices([(-2, 0), (0, 0), (0, 2)])
    d = tmp_path / "d.csv"
    d.write_text("x1,x2,y,t\n-1,1,0.5,1\n1,-1,0.2,1\n1,1,0.3,0\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(d, boundary, standardize=False)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_dataset(d, boundary, standardize=False, allow_t_override=True)
    assert caught and ds.treated[1]
    d.write_text("x1,x2,y,t\n-1,1,0.5,2\n")
    with pytest.raises(DataError):
        load_dataset(d, boundary, standardize=False)


def test_standardization_round_trip():
    dgp = make_dgp("linear")
    raw = dgp.sample(1500, 3)
    x = raw.x * np.array([3.0, 0.5]) + np.array([10.0, -4.0])
    boundary = BoundaryPolyline.from_vertices(dgp.polyline.vertices * np.array([3.0, 0.5]) + np.array([10.0, -4.0]))
    ds = Dataset.from_arrays(x, raw.y, boundary=boundary, standardize=True)
    np.testing.assert_allclose(ds.x.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(ds.x.std(axis=0, ddof=1), 1, atol=1e-12)
    np.testing.assert_allclose(ds.to_raw(ds.x), x, atol=1e-12)
    # pre-standardized input with no further scaling gives the same curve
    pre = Dataset.from_arrays(ds.x, raw.y, boundary=ds.boundary, standardize=False)
    grid = make_grid(boundary, 8)
    cfg = EstimatorConfig(bandwidth=BandwidthPolicy("rot-smooth"))
    a = estimate_curve(ds, grid, cfg)
    pre_grid = grid.transformed(ds.loc, ds.scale)
    b = estimate_curve(pre, pre_grid, cfg)
    for pa, pb in zip(a.points, b.points):
        assert pa.tau_hat == pytest.approx(pb.tau_hat, abs=1e-10)
    np.testing.assert_allclose(a.points[3].x_raw, grid.points[3])
    fixed = EstimatorConfig(bandwidth=BandwidthPolicy("value", 1.0))
    c = estimate_curve(ds, grid, fixed)
    d = estimate_curve(pre, pre_grid, EstimatorConfig(bandwidth=BandwidthPolicy("value", 1.0 / ds.length_scale)))
    for pc, pd in zip(c.points, d.points):
        assert pc.tau_hat == pytest.approx(pd.tau_hat, abs=1e-10)
        assert pc.h_raw == pytest.approx(1.0)


def test_estimate_records(files, capsys):
    tmp, d, b = files
    code, out, _ = _run(["estimate", "--data", d, "--boundary", b, "--method", "biv", "--p", "1",
                         "--bw", "mse", "--grid-size", "40", "--seed", "7"], capsys)
    assert code == 0
    doc = json.loads(out)
    recs = doc["records"]
    assert len(recs) == 40
    keys = {"index", "x1", "x2", "tau_hat", "se", "ci_low", "ci_high", "h_used", "n_eff0", "n_eff1", "method", "status"}
    assert all(keys <= set(r) for r in recs)
    ok = [r for r in recs if r["status"] == "ok"]
    assert ok and all(r["ci_low"] < r["tau_hat"] < r["ci_high"] for r in ok)
    assert [r["index"] for r in recs] == list(range(40))


def test_reals_have_seventeen_digits(files, capsys):
    tmp, d, b = files
    _, out, _ = _run(["estimate", "--data", d, "--boundary", b, "--bw", "value:1", "--grid-size", "3"], capsys)
    tok = re.search(r'"tau_hat": ([-0-9.e]+)', out).group(1)
    assert tok == format(float(tok), ".17g")
    doc = json.loads(out)
    assert all(float(format(r["tau_hat"], ".17g")) == r["tau_hat"] for r in doc["records"])
    assert dumps_json({"a": 0.1}) == '{"a": 0.10000000000000001}\n'
    assert dumps_json({"a": float("nan")}) == '{"a": null}\n'


def test_failed_points_are_not_numbers(files, capsys):
    tmp, d, b = files
    code, out, _ = _run(["estimate", "--data", d, "--boundary", b, "--bw", "value:0.02", "--grid-size", "5"], capsys)
    assert code == 0
    for r in json.loads(out)["records"]:
        assert r["status"] != "ok"
        assert r["status"].startswith("degenerate_") and r["tau_hat"] is None
        assert r["se"] is None


def test_bands_identical_reruns(files, capsys, monkeypatch):
    tmp, d, b = files
    outs = []
    for i, threads in enumerate(("1", "4", "4")):
        monkeypatch.setenv("BDD_THREADS", threads)
        path = tmp / f"bands{i}.json"
        code, _, _ = _run(["bands", "--data", d, "--boundary", b, "--bw", "value:1", "--grid-size", "12",
                           "--alpha", "0.05", "--draws", "3000", "--seed", "7", "--out", path], capsys)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    doc = json.loads(outs[0])
    q = doc["band"]["q_alpha"]
    for r in doc["records"]:
        assert r["q_alpha"] == q
        assert r["band_high"] - r["band_low"] == pytest.approx(2 * q * r["se"], rel=1e-12)
        assert r["band_high"] - r["band_low"] >= r["ci_high"] - r["ci_low"]


def test_simulate_identical_reruns(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"dgp": "linear", "n": 800, "reps": 5, "seed": 7, "bandwidth": "value:1.5",
                               "grid_size": 5, "bands": True, "draws": 1000}))
    blobs = []
    for i in range(2):
        prefix = tmp_path / f"sim{i}"
        code, _, _ = _run(["simulate", "--config", cfg, "--out", prefix], capsys)
        assert code == 0
        blobs.append(((tmp_path / f"sim{i}.csv").read_bytes(), (tmp_path / f"sim{i}.json").read_bytes()))
    assert blobs[0] == blobs[1]
    code, out, _ = _run(["simulate", "--config", cfg, "--reps", "3"], capsys)
    assert code == 0 and json.loads(out)["reps"] == 3


def test_oracle_bias_table(capsys):
    code, out, _ = _run(["oracle-bias", "--h", "1", "--s", "0,0.1,0.2", "--p", "1"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "h,s,bias" and len(lines) == 4
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    assert [r[1] for r in rows] == [0.0, 0.1, 0.2]
    assert abs(rows[0][2]) < 1e-9 and rows[1][2] > 0
    code, out, _ = _run(["oracle-bias", "--slope"], capsys)
    slope = float(out.strip().split("\n")[1].split(",")[2])
    assert slope == pytest.approx(0.2313350, abs=1e-3)


def test_kinks_report(files, capsys):
    tmp, d, b = files
    code, out, _ = _run(["kinks", "--boundary", b], capsys)
    assert code == 0
    doc = json.loads(out)
    assert [k["index"] for k in doc["kinks"]] == [1]
    assert doc["kinks"][0]["interior_angle"] == pytest.approx(90.0)


def test_bw_command(files, capsys):
    tmp, d, b = files
    code, out, _ = _run(["bw", "--data", d, "--boundary", b, "--bw", "imse", "--grid-size", "6"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["policy"] == "imse" and len(doc["grid"]) == 6
    assert len({g["h"] for g in doc["grid"]}) == 1 and doc["grid"][0]["h"] > 0
    sel = doc["selections"][0]
    assert sel["method"] in ("imse", "rot-smooth") and "diagnostics" in sel


def test_exit_codes(files, capsys, tmp_path):
    tmp, d, b = files
    assert _run(["estimate", "--data", d, "--boundary", b, "--bogus"], capsys)[0] == 2
    assert _run(["nonsense"], capsys)[0] == 2
    code, _, err = _run(["estimate", "--data", d, "--boundary", b, "--method", "dist", "--rbc", "--smooth-boundary"], capsys)
    assert code == 2 and "kink" in err
    assert _run(["estimate", "--data", d, "--boundary", b, "--method", "dist", "--rbc"], capsys)[0] == 2
    assert _run(["estimate", "--data", d, "--boundary", b, "--method", "dist", "--bw", "mse"], capsys)[0] == 2
    assert _run(["estimate", "--data", d, "--boundary", b, "--p", "1", "--nu", "1,1"], capsys)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,y\n-1,1,0.5\n1,-1,NaN\n")
    code, _, err = _run(["estimate", "--data", bad, "--boundary", b], capsys)
    assert code == 3 and "row 2" in err
    assert _run(["estimate", "--data", tmp_path / "missing.csv", "--boundary", b], capsys)[0] == 3
    code, _, _ = _run(["bands", "--data", d, "--boundary", b, "--bw", "value:0.02", "--grid-size", "4"], capsys)
    assert code == 4


def test_dist_with_smooth_boundary_warning(files, capsys):
    tmp, d, b = files
    code, out, err = _run(["bands", "--data", d, "--boundary", b, "--method", "dist", "--bw", "rot-smooth",
                           "--grid-size", "5", "--draws", "1000"], capsys)
    assert code == 0 and "kink" in err
    assert json.loads(out)["warnings"]


def test_rbc_records(files, capsys):
    tmp, d, b = files
    code, out, _ = _run(["estimate", "--data", d, "--boundary", b, "--bw", "value:1.5", "--rbc", "--grid-size", "4"], capsys)
    assert code == 0
    for r in json.loads(out)["records"]:
        assert r["status"] == "ok"
        assert 0.5 * (r["ci_low"] + r["ci_high"]) == pytest.approx(r["tau_rbc"], abs=1e-12)
