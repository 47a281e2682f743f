import json

import pytest

from semamesh.cli import EXIT_CONSISTENCY, EXIT_INPUT, EXIT_OK, main


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth-scene", "--out", str(out), "--seed", "7", "--trees", "12"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def train_dir(scene_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    s = scene_dir
    code = main(["render-labels", "--out", str(out), "--mesh", str(s / "mesh.ply"), "--cameras", str(s / "cameras.json"),
                 "--labels", str(s / "crowns.geojson"), "--dtm", str(s / "dtm.asc")])
    assert code == EXIT_OK
    return out


def _agg_args(s, preds, out):
    return ["aggregate", "--out", str(out), "--mesh", str(s / "mesh.ply"), "--cameras", str(s / "cameras.json"),
            "--predictions", str(preds), "--dtm", str(s / "dtm.asc"), "--objects", str(s / "crowns.geojson")]


def test_render_labels_outputs(train_dir):
    doc = json.loads((train_dir / "labels_manifest.json").read_text())
    images = sorted((train_dir / "images").iterdir())
    assert len(images) == len(doc["parameters"]["cameras_retained"]) == 20
    man = json.loads((train_dir / "manifest.json").read_text())
    assert set(man["inputs"]) == {"mesh", "cameras", "labels", "dtm"}
    assert man["parameters"]["roi_buffer"] == 50.0 and man["parameters"]["height_threshold"] == 2.0
    assert "labeled_mesh.ply" in man["outputs"]


def test_aggregate_roundtrip_and_ground_weight(scene_dir, train_dir, tmp_path):
    args = _agg_args(scene_dir, train_dir / "labels_manifest.json", tmp_path)
    assert main(args + ["--ground-weight", "0.05"]) == EXIT_OK
    feats = json.loads((tmp_path / "objects.geojson").read_text())["features"]
    assert all(f["properties"]["class_id"] == f["properties"]["input_class_id"] for f in feats)
    assert json.loads((tmp_path / "metadata.json").read_text())["ground_weight"] == 0.05
    assert json.loads((tmp_path / "manifest.json").read_text())["parameters"]["ground_weight"] == 0.05
    header = (tmp_path / "face_classes.csv").read_text().splitlines()[0]
    assert header.startswith("face,source_face,class_id,votes_1")


def test_aggregate_missing_predictions(scene_dir, tmp_path, capsys):
    (tmp_path / "preds.json").write_text(json.dumps({"cameras": {}}))
    assert main(_agg_args(scene_dir, tmp_path / "preds.json", tmp_path / "o")) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "missing prediction images" in err and "nadir_000" in err


def test_corrupt_ply_exit_code(scene_dir, tmp_path, capsys):
    lines = (scene_dir / "mesh.ply").read_text().splitlines()
    lines[12] = "1.0 oops 2.0"
    (tmp_path / "bad.ply").write_text("\n".join(lines))
    s = scene_dir
    code = main(["render-labels", "--out", str(tmp_path / "o"), "--mesh", str(tmp_path / "bad.ply"),
                 "--cameras", str(s / "cameras.json"), "--labels", str(s / "crowns.geojson"), "--dtm", str(s / "dtm.asc")])
    assert code == EXIT_INPUT
    assert "line 13" in capsys.readouterr().err


def test_crs_mismatch_exit_code(scene_dir, tmp_path):
    doc = json.loads((scene_dir / "crowns.geojson").read_text())
    doc["crs_tag"] = "EPSG:4326"
    (tmp_path / "crowns.geojson").write_text(json.dumps(doc))
    s = scene_dir
    code = main(["render-labels", "--out", str(tmp_path / "o"), "--mesh", str(s / "mesh.ply"),
                 "--cameras", str(s / "cameras.json"), "--labels", str(tmp_path / "crowns.geojson"), "--dtm", str(s / "dtm.asc")])
    assert code == EXIT_CONSISTENCY


def test_missing_input_file(tmp_path):
    assert main(["detect-trees", "--out", str(tmp_path), "--dsm", "nope.asc", "--dtm", "nope.asc"]) == EXIT_INPUT
    assert main(["detect-trees", "--out", str(tmp_path)]) == EXIT_INPUT


def test_config_file_and_flag_precedence(scene_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dsm": str(scene_dir / "dsm.asc"), "dtm": str(scene_dir / "dtm.asc"), "min-height": 50.0}))
    assert main(["detect-trees", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["n_treetops"] == 0
    assert main(["detect-trees", "--config", str(cfg), "--min-height", "5", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["n_treetops"] == 12
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["detect-trees", "--config", str(cfg), "--out", str(tmp_path / "c")]) == EXIT_INPUT


def test_output_dir_env(scene_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SEMAMESH_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["detect-trees", "--dsm", str(scene_dir / "dsm.asc"), "--dtm", str(scene_dir / "dtm.asc")]) == EXIT_OK
    assert (tmp_path / "env" / "treetops.geojson").is_file()


def test_tree_chain(scene_dir, tmp_path):
    det, crowns, match = tmp_path / "det", tmp_path / "crowns", tmp_path / "match"
    assert main(["detect-trees", "--out", str(det), "--dsm", str(scene_dir / "dsm.asc"), "--dtm", str(scene_dir / "dtm.asc")]) == 0
    assert main(["delineate-crowns", "--out", str(crowns), "--chm", str(det / "chm.asc"), "--treetops", str(det / "treetops.geojson")]) == 0
    assert json.loads((crowns / "manifest.json").read_text())["n_crowns"] == 12
    assert main(["match-trees", "--out", str(match), "--field", str(scene_dir / "field_trees.geojson"),
                 "--treetops", str(det / "treetops.geojson")]) == 0
    rows = (match / "matches.csv").read_text().splitlines()
    assert rows[0] == "field_id,treetop_id,distance,class_id" and len(rows) == 13


def test_ortho_chain(scene_dir, tmp_path):
    tile, agg = tmp_path / "tile", tmp_path / "agg"
    assert main(["ortho-tile", "--out", str(tile), "--raster", str(scene_dir / "dsm.asc"),
                 "--labels", str(scene_dir / "crowns.geojson"), "--chip-size", "50"]) == 0
    assert main(["ortho-aggregate", "--out", str(agg), "--chips", str(tile / "chips.json"), "--files-key", "label_files",
                 "--crowns", str(scene_dir / "crowns.geojson")]) == 0
    feats = json.loads((agg / "crowns.geojson").read_text())["features"]
    assert all(f["properties"]["class_id"] == f["properties"]["input_class_id"] for f in feats)
    assert (agg / "class_raster.asc").is_file()


def test_evaluate_diagonal_fixture(tmp_path):
    (tmp_path / "cm.csv").write_text("true\\pred,oak,pine,null\noak,5,0,0\npine,0,7,0\n")
    assert main(["evaluate", "--out", str(tmp_path / "o"), "--confusion", str(tmp_path / "cm.csv")]) == 0
    report = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert report["aggregate"]["accuracy"] == 1.0
    assert report["class_names"] == ["oak", "pine"]


def test_evaluate_pairs_by_site(tmp_path):
    (tmp_path / "p.csv").write_text("truth,pred,site\n1,1,a\n2,1,a\n2,2,b\n1,,b\n")
    assert main(["evaluate", "--out", str(tmp_path / "o"), "--pairs", str(tmp_path / "p.csv"), "--n-classes", "2"]) == 0
    report = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert report["aggregate"]["accuracy"] == 0.5
    assert set(report["per_site"]) == {"a", "b"}
    assert report["aggregate"]["n_null_predictions"] == 1


@pytest.mark.parametrize("cmd", [[], ["synth-scene"], ["ortho-tile"], ["evaluate"]])
def test_help_exits_cleanly(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([*cmd, "--help"])
    assert exc.value.code == 0
    assert "usage: semamesh" in capsys.readouterr().out
