import csv
import json

import numpy as np
import pytest

from chainclose import cli, lab
from chainclose.chain_engine import build_chain_graph, chain_recurrent_classes
from chainclose.presets import get_preset


@pytest.fixture(scope="module")
def product_periodic():
    sc = lab.Scenario("pp", "product", (10, 20, 40), x=(0.2, 0.3, 0.1), periodic=True, winding=1)
    return sc, lab.run_scenario(sc, strict=True)


def test_product_periodic(product_periodic):
    _, rec = product_periodic
    assert rec.passed and [r.k for r in rec.results] == [10, 20, 40]
    for r in rec.results:
        assert r.periodic and r.closure_residual < 1e-10
        assert 0 < abs(r.tau_k) <= 1 / r.k
        assert max(r.d_x, r.d_y) < r.bound


def test_cross_class_not_attainable():
    sc = lab.Scenario("x", "two_circle", (10,), x=(0.1, 0.2, 0.5), y=(0.1, 0.2, 0.0),
                      resolution=64, graph_eps=0.03)
    rec = lab.run_scenario(sc)
    assert rec.status == "not chain attainable" and not rec.results and not rec.passed


def test_bad_preset_and_recipe():
    with pytest.raises(KeyError, match="nope"):
        lab.run_scenario(lab.Scenario("b", "nope", (10,)))
    with pytest.raises(ValueError, match="recipe"):
        lab.Scenario("b", "product", (10,), recipe="magic")
    with pytest.raises(ValueError, match="below"):
        lab.Scenario("b", "product", (4,))


def test_study_table(product_periodic, tmp_path):
    sc, rec = product_periodic
    rows = lab.convergence_study(sc, rec)
    assert [r["k"] for r in rows] == [10, 20, 40]
    for r, kr in zip(rows, rec.results):
        assert list(r) == lab.STUDY_COLUMNS
        assert r["bound"] == pytest.approx((kr.L_meas + 1) / kr.k)
        assert r["margin"] > 0
    p = tmp_path / "s.csv"
    lab.write_table(rows, p)
    with open(p) as fh:
        back = list(csv.DictReader(fh))
    assert float(back[1]["tau_k"]) == rows[1]["tau_k"]
    with pytest.raises(ValueError, match="three"):
        lab.convergence_study(lab.Scenario("t", "product", (10, 20)))


def test_deterministic():
    sc = lab.Scenario("d", "cat_skew", (10, 20), seed=3, recipe="random")
    assert lab.run_scenario(sc).to_json() == lab.run_scenario(sc).to_json()


def test_random_recipe_passes():
    rec = lab.run_scenario(lab.Scenario("r", "cat_skew", (10, 20, 40), seed=1, recipe="random"), strict=True)
    assert rec.passed
    assert all(r.L_meas <= get_preset("cat_skew").system.shadowing_constant() + 1 for r in rec.results)


def test_point_files(product_periodic, tmp_path):
    _, rec = product_periodic
    files = lab.emit_plot_data(rec, tmp_path)
    cols, data = lab.read_point_file(files["tau"])
    assert cols == ["log_k", "log_tau"] and data.shape == (3, 2)
    assert data[:, 1] == pytest.approx(np.log([abs(r.tau_k) for r in rec.results]))
    cols, data = lab.read_point_file(files["dist"])
    assert data.shape == (3, 4)
    bad = tmp_path / "bad.dat"
    bad.write_text("1 2\n")
    with pytest.raises(ValueError, match="header"):
        lab.read_point_file(bad)


def test_box_points(tmp_path, two_circle):
    g = build_chain_graph(two_circle, 16, 0.12)
    classes = chain_recurrent_classes(g)
    p = lab.write_box_points(g, classes, tmp_path / "b.dat")
    cols, data = lab.read_point_file(p)
    assert len(data) == sum(len(c) for c in classes)
    assert cols[:2] == ["box", "class"]


def _run_cli(args, tmp_path, capsys):
    code = cli.main([*args, "--out", str(tmp_path)])
    return code, capsys.readouterr()


def test_cli_run_json_and_plot(tmp_path, capsys):
    code, cap = _run_cli(["run", "--preset", "product", "--k", "10", "20", "--periodic", "--winding", "1",
                          "--x", "0.2", "0.3", "0.1", "--format", "json", "--plot"], tmp_path, capsys)
    assert code == 0, cap.err
    d = json.loads((tmp_path / "product_s0.json").read_text())
    assert d["passed"] and len(d["results"]) == 2
    assert list(tmp_path.glob("*.png")) and (tmp_path / "product_s0_tau.dat").exists()


def test_cli_study_from_config(tmp_path, capsys):
    ini = tmp_path / "sc.ini"
    ini.write_text("[scenario]\npreset = cat_skew\nk = 10 20 40\nrecipe = random\nseed = 2\n")
    code, cap = _run_cli(["study", "--config", str(ini)], tmp_path, capsys)
    assert code == 0, cap.err
    with open(tmp_path / "cat_skew_s2_study.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3
    assert "k=  40" in cap.out


def test_cli_classes(tmp_path, capsys):
    code, cap = _run_cli(["classes", "--preset", "two_circle", "--resolution", "16", "--eps", "0.12", "--plot"],
                         tmp_path, capsys)
    assert code == 0
    assert (tmp_path / "two_circle_r16_classes.csv").exists()
    assert (tmp_path / "two_circle_r16_classes.png").exists()


def test_cli_shadow_bench(tmp_path, capsys):
    code, cap = _run_cli(["shadow-bench", "--preset", "cat_skew", "--trials", "5", "--plot"], tmp_path, capsys)
    assert code == 0 and "L_b + 1" in cap.out
    assert (tmp_path / "cat_skew_shadow.png").exists()


@pytest.mark.parametrize("args, msg", [(["run", "--preset", "nope"], "nope"),
                                       (["classes", "--preset", "product", "--resolution", "64", "--eps", "0.12"],
                                        "edges"),
                                       (["run", "--config", "/nonexistent.ini"], "nonexistent")])
def test_cli_errors(tmp_path, capsys, args, msg):
    code, cap = _run_cli(args, tmp_path, capsys)
    assert code == 2 and msg in cap.err
