"""The full pipeline through the ``semamesh`` command line, in a temporary folder.

Run with ``python3 demos/command_line.py``. Every step is a shell command;
``main`` is called in-process only to keep the demo self-contained.
"""
import json
import tempfile
from pathlib import Path

from semamesh.cli import main

work = Path(tempfile.mkdtemp(prefix="semamesh-demo-"))
s = work / "scene"


def run(*args):
    print("$ semamesh", " ".join(str(a) for a in args))
    code = main([str(a) for a in args])
    assert code == 0, code


run("synth-scene", "--seed", 3, "--out", s)
run("render-labels", "--mesh", s / "mesh.ply", "--cameras", s / "cameras.json",
    "--labels", s / "crowns.geojson", "--dtm", s / "dtm.asc", "--out", work / "train")
# A real run would replace the label images with model predictions here.
run("aggregate", "--mesh", s / "mesh.ply", "--cameras", s / "cameras.json",
    "--predictions", work / "train" / "labels_manifest.json", "--dtm", s / "dtm.asc",
    "--objects", s / "crowns.geojson", "--out", work / "agg")
run("evaluate", "--objects", work / "agg" / "objects.geojson", "--n-classes", 5, "--out", work / "eval")

report = json.loads((work / "eval" / "metrics.json").read_text())
print("accuracy:", report["aggregate"]["accuracy"])
print("manifest of the aggregate step:")
print((work / "agg" / "manifest.json").read_text()[:600], "...")
