import base64
import io
import json
import re

import numpy as np
import pytest

from gih.harness import EXPERIMENTS, PAPER_MAP, cli, config as cfgmod, report, run_experiment
from gih.harness.experiments import ExperimentError, OutputLock

A7 = np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 1.0]])

TINY_HEATMAP = {"model": {"ref": "conv-pool-linear", "args": {"input_shape": [1, 4, 4], "kernel": 2, "channels": 2}},
                "estimator": {"n_models": 40, "n_probes": 1}}


def _write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


# tables ---------------------------------------------------------------------------------


def test_schemas_cover_every_experiment():
    assert set(report.SCHEMAS) == set(EXPERIMENTS) == set(PAPER_MAP)
    assert report.SCHEMAS["conjecture1"] == ("epoch", "corr_Gt_S", "corr_Gt_GSG")


def test_write_table_rejects_bad_rows(tmp_path):
    with pytest.raises(report.SchemaError):
        report.write_table(tmp_path / "a.csv", "conjecture1", [(0, 0.1)])
    with pytest.raises(ValueError):
        report.write_table(tmp_path / "b.csv", "conjecture1", [(0, 0.1, float("nan"))])
    with pytest.raises(report.SchemaError):
        report.write_table(tmp_path / "c.csv", "conjecture1", [])
    assert not any(tmp_path.iterdir())


def test_table_roundtrip(tmp_path):
    p = report.write_table(tmp_path / "c.csv", "conjecture1", [(0, 0.25, 0.5), (1, 0.3, True)])
    header, body = report.read_table(p, "conjecture1")
    assert body == [["0", "0.25", "0.5"], ["1", "0.3", "true"]]
    with pytest.raises(report.SchemaError):
        report.read_table(p, "velocity")


# figures ---------------------------------------------------------------------------------


def test_line_chart_legend_labels(tmp_path):
    p = report.write_table(tmp_path / "conjecture1.csv", "conjecture1", [(0, 0.2, 0.3), (1, 0.25, 0.45)])
    svgs = report.render_report(p, "conjecture1", tmp_path)
    assert [s.name for s in svgs] == ["conjecture1.svg"]
    text = svgs[0].read_text()
    # text is rendered as paths; matplotlib keeps the legend strings as comments/ids
    assert "Corr(G^t,S)" in text and "Corr(G^t,GSG)" in text
    assert "<image" not in text and "href=\"http" not in text


def test_empty_csv_renders_nothing(tmp_path):
    p = tmp_path / "conjecture1.csv"
    p.write_text("")
    with pytest.raises(report.SchemaError):
        report.render_report(p, "conjecture1", tmp_path)
    p.write_text("epoch,corr_Gt_S,corr_Gt_GSG\n")
    with pytest.raises(report.SchemaError):
        report.render_report(p, "conjecture1", tmp_path)
    assert not list(tmp_path.glob("*.svg"))


def _cell_colors(svg_text, n):
    """Decode the embedded raster of an imshow heatmap and sample each cell centre."""
    import matplotlib.image as mpimg

    m = re.search(r'data:image/png;base64,([A-Za-z0-9+/=\s]+)"[^>]*?transform="([^"]*)"', svg_text)
    img = mpimg.imread(io.BytesIO(base64.b64decode(m.group(1))), format="png")
    if "scale(1 -1)" in m.group(2):  # raster stored bottom-up
        img = img[::-1]
    h, w = img.shape[:2]
    return np.array([[img[int((i + 0.5) * h / n), int((j + 0.5) * w / n), :3] for j in range(n)] for i in range(n)])


def test_heatmap_a7_darkest_centre(tmp_path):
    p = report.heatmap(A7, tmp_path / "a7.svg")
    colors = _cell_colors(p.read_text(), 3)
    lum = colors @ np.array([0.299, 0.587, 0.114])
    assert np.unravel_index(np.argmin(lum), lum.shape) == (1, 1)
    # zero entries map to the neutral middle of the diverging scale
    assert lum[0, 2] == pytest.approx(lum.max())


def test_heatmap_scale_is_symmetric(tmp_path):
    from matplotlib import colormaps

    a = np.array([[1.0, -0.5], [-0.5, 0.25]])
    colors = _cell_colors(report.heatmap(a, tmp_path / "s.svg").read_text(), 2)
    # value v maps to cmap(0.5 + v / (2 max|a|)), so zero is the neutral centre
    expected = colormaps["RdBu_r"](0.5 + a / 2.0)[..., :3]
    np.testing.assert_allclose(colors, expected, atol=0.02)
    with pytest.raises(ValueError):
        report.heatmap(np.array([[np.inf]]), tmp_path / "x.svg")


# configs ---------------------------------------------------------------------------------


def test_every_experiment_has_desk_and_paper_configs():
    for exp in EXPERIMENTS:
        desk = cfgmod.resolve(exp)
        paper = cfgmod.resolve(exp, {"scale": "paper"})
        assert desk["experiment"] == paper["experiment"] == exp


def test_resolve_errors(tmp_path):
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.resolve("nope")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.resolve("sbh", {"experiment": "velocity"})
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load_config(bad)
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.model_from_config({"file": str(tmp_path / "nothing.json")})


def test_content_hash_tracks_files(tmp_path):
    f = tmp_path / "spec.json"
    f.write_text("a")
    cfg = {"experiment": "x", "seed": 1}
    h1 = cfgmod.content_hash(cfg, [f])
    f.write_text("b")
    assert cfgmod.content_hash(cfg, [f]) != h1
    assert cfgmod.content_hash({**cfg, "_base_dir": "/y"}, [f]) == cfgmod.content_hash(cfg, [f])


# runs -------------------------------------------------------------------------------------


def test_heatmap_run_is_bitwise_reproducible(tmp_path):
    cfg = cfgmod.resolve("geometry-heatmap", TINY_HEATMAP, seed=5)
    out1, _ = run_experiment(cfg, tmp_path / "a", threads=1)
    out2, _ = run_experiment(cfg, tmp_path / "b", threads=2)
    a = (out1 / "geometry-heatmap.csv").read_bytes()
    assert a == (out2 / "geometry-heatmap.csv").read_bytes()
    man = json.loads((out1 / "manifest.json").read_text())
    assert man["paper_map"] == {"geometry-heatmap": PAPER_MAP["geometry-heatmap"]}
    assert man["seeds"]["master"] == 5
    assert man["content_hash"] == json.loads((out2 / "manifest.json").read_text())["content_hash"]
    assert "geometry-heatmap.svg" in man["outputs"]
    assert (out1 / "geometry-heatmap.svg").is_file()
    assert not (out1 / ".lock").exists()


def test_output_lock(tmp_path):
    with OutputLock(tmp_path):
        with pytest.raises(ExperimentError):
            with OutputLock(tmp_path):
                pass
    with OutputLock(tmp_path):
        pass


def test_module_error_gets_context(tmp_path):
    cfg = cfgmod.resolve("geometry-heatmap", {**TINY_HEATMAP, "estimator": {"n_models": 0}})
    with pytest.raises(ExperimentError, match="geometry-heatmap"):
        run_experiment(cfg, tmp_path)
    assert not list(tmp_path.glob("*.csv"))
    assert not (tmp_path / ".lock").exists()


def test_verify_theorems_rows_in_order(tmp_path):
    claims = {name: {"skip": True} for name in
              ["A7-golden", "Thm3-identity", "Thm4-oracle", "Thm1-trend", "Thm2-corr", "Cor1-sandwich",
               "Prop1-labels", "LinReg-delta"]}
    claims["Lemma3"] = {"dim": 4, "n_samples": 50_000, "tolerance": 0.02}
    cfg = cfgmod.resolve("verify-theorems", {"claims": claims})
    out, outcome = run_experiment(cfg, tmp_path)
    header, body = report.read_table(out / "verify-theorems.csv", "verify-theorems")
    assert [r[0] for r in body] == ["Lemma3"] and body[0][-1] == "true"
    assert outcome.passed


def test_verify_theorems_claim_order_default():
    from gih.harness.experiments import CLAIMS

    assert list(CLAIMS) == ["A7-golden", "Thm3-identity", "Thm4-oracle", "Lemma3", "Thm1-trend", "Thm2-corr",
                            "Cor1-sandwich", "Prop1-labels", "LinReg-delta"]


# CLI -------------------------------------------------------------------------------------------


def test_cli_run_success(tmp_path, capsys):
    cfg = _write_json(tmp_path / "c.json", TINY_HEATMAP)
    code = cli.main(["run", "geometry-heatmap", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"])
    assert code == 0
    assert (tmp_path / "o" / "geometry-heatmap.csv").is_file()


def test_cli_config_error_exit_2(tmp_path, capsys):
    assert cli.main(["run", "no-such-experiment", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["run", "sbh", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_failed_claim_exit_1(tmp_path):
    claims = {name: {"skip": True} for name in
              ["A7-golden", "Thm3-identity", "Thm4-oracle", "Thm1-trend", "Thm2-corr", "Cor1-sandwich",
               "Prop1-labels", "LinReg-delta"]}
    claims["Lemma3"] = {"dim": 4, "n_samples": 100, "tolerance": 1e-9}
    cfg = _write_json(tmp_path / "v.json", {"claims": claims})
    assert cli.main(["verify-theorems", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    _, body = report.read_table(tmp_path / "o" / "verify-theorems.csv", "verify-theorems")
    assert body[0][-1] == "false"


def test_cli_locked_output_exit_1(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / ".lock").write_text("1")
    cfg = _write_json(tmp_path / "c.json", TINY_HEATMAP)
    assert cli.main(["run", "geometry-heatmap", "--config", str(cfg), "--out", str(out)]) == 1


def test_cli_estimate_geometry(tmp_path):
    code = cli.main(["estimate-geometry", "--model", "appendix-example", "--out", str(tmp_path), "--n-models", "64"])
    assert code == 0
    for name in ("G.bin", "G.csv", "G.json", "G.svg"):
        assert (tmp_path / name).is_file()


def test_cli_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv("GIH_THREADS", "2")
    cfg = _write_json(tmp_path / "c.json", TINY_HEATMAP)
    assert cli.main(["run", "geometry-heatmap", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["threads"] == 2


def test_low_score_data_label_modes():
    from gih.harness.experiments import _low_score_data

    vecs = np.eye(12)
    d = {"m": 40, "n_top": 2, "n_bottom": 4, "top_noise": 0.0}
    flipped = _low_score_data(12, vecs, {**d, "noisy_labels": "flipped"}, 3, 1.0)
    np.testing.assert_array_equal(np.sign(flipped.X[:, 0]), -flipped.y)
    clean = _low_score_data(12, vecs, d, 3, 0.0)
    np.testing.assert_array_equal(np.sign(clean.X[:, 0]), clean.y)
    assert np.all(clean.X[:, 8:] == 0)
