"""Command-line entry point: ``semamesh <command> [options]``.

Every command writes its outputs plus ``manifest.json`` (parameters, input
hashes, output hashes, toolkit version) into the output directory. Options
can also come from ``--config file.json``; flags given on the command line
win. The output directory defaults to ``$SEMAMESH_OUTPUT_DIR`` or ``out``.

Exit codes: 0 success, 2 bad input, 3 inconsistent inputs, 4 internal error.
"""
from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConsistencyError, FormatError, InputError
from .geo import (
    NULL_CLASS,
    UNSPECIFIED_CRS,
    GeoPolygon,
    GeoRaster,
    LabelPolygons,
    check_crs,
    class_to_json,
    feature_collection,
    polygon_feature,
    read_asc,
    read_label_polygons,
    write_asc,
    write_json,
    write_label_polygons,
)

ENV_OUTPUT_DIR = "SEMAMESH_OUTPUT_DIR"
EXIT_OK, EXIT_INPUT, EXIT_CONSISTENCY, EXIT_INTERNAL = 0, 2, 3, 4
CRS_SUFFIX = ".crs"
# Options that steer the run but do not change results.
_NOT_PARAMETERS = {"command", "config", "threads", "out", "func", "path_options"}


class Run:
    """Tracks inputs and outputs of one command and writes its manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = {}
        self.outputs = []

    def input(self, name, path):
        from .formats import sha256

        path = Path(path)
        if not path.is_file():
            raise InputError(f"{name}: no such file {path}")
        self.inputs[name] = {"file": path.name, "sha256": sha256(path)}
        return path

    def output(self, rel) -> Path:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(rel))
        return path

    def finish(self, extra=None):
        from .formats import sha256

        params = {
            k: v
            for k, v in sorted(vars(self.args).items())
            if k not in _NOT_PARAMETERS and k not in self.args.path_options
        }
        doc = {
            "tool": "semamesh",
            "version": __version__,
            "command": self.args.command,
            "parameters": params,
            "inputs": self.inputs,
            "outputs": {rel: sha256(self.out / rel) for rel in sorted(set(self.outputs))},
        }
        if extra:
            doc.update(extra)
        write_json(self.out / "manifest.json", doc)


# ---------------------------------------------------------------------------
# raster and table helpers


def _read_raster(run, name, path) -> GeoRaster:
    path = run.input(name, path)
    side = path.with_name(path.name + CRS_SUFFIX)
    crs = side.read_text().strip() if side.is_file() else UNSPECIFIED_CRS
    return read_asc(path, crs)


def _write_raster(run, rel, raster: GeoRaster):
    path = run.output(rel)
    write_asc(raster, path)
    run.output(rel + CRS_SUFFIX).write_text(raster.crs_tag + "\n")


def _write_csv(run, rel, header, rows):
    from .formats import csv_text

    run.output(rel).write_text(csv_text(header, rows))


def _scores_list(scores):
    return [float(s) for s in scores]


def _object_features(objects: LabelPolygons, preds):
    feats = []
    for poly, pred in zip(objects, preds):
        out = GeoPolygon(poly.exterior, poly.interiors, pred.class_id, poly.attributes)
        feats.append(
            polygon_feature(
                out,
                object_id=pred.object_id,
                input_class_id=class_to_json(poly.class_id),
                scores=_scores_list(pred.scores),
                n_faces=pred.n_faces,
            )
        )
    return feats


def _legend(n_classes, names=None):
    names = _split_names(names)
    if names and len(names) != n_classes:
        raise InputError(f"{len(names)} class names given for {n_classes} classes")
    return {str(k): (names[k - 1] if names else str(k)) for k in range(1, n_classes + 1)}


def _split_names(names):
    if not names:
        return None
    return [n.strip() for n in names.split(",")] if isinstance(names, str) else list(names)


# ---------------------------------------------------------------------------
# commands


def cmd_synth_scene(run: Run):
    from .camera import write_cameras
    from .formats import write_field_trees
    from .mesh import write_ply
    from .synthetic import field_survey, make_scene

    a = run.args
    scene = make_scene(
        a.seed,
        a.trees,
        a.extent,
        ground_cells=a.ground_cells,
        n_cameras=a.cameras,
        image_size=(a.image_width, a.image_height),
        n_classes=a.classes,
    )
    write_ply(run.output("mesh.ply"), scene.mesh)
    write_cameras(scene.cameras, run.output("cameras.json"))
    _write_raster(run, "dtm.asc", scene.dtm)
    _write_raster(run, "dsm.asc", scene.dsm)
    write_label_polygons(scene.crowns, run.output("crowns.geojson"))
    write_field_trees(run.output("field_trees.geojson"), field_survey(scene, a.seed), scene.crs_tag)
    _write_csv(
        run,
        "trees.csv",
        ["id", "x", "y", "height", "radius", "class_id"],
        [[t.id, repr(t.x), repr(t.y), repr(t.height), repr(t.radius), t.class_id] for t in scene.trees],
    )
    run.finish({"scene": {"n_faces": scene.mesh.n_faces, "n_cameras": len(scene.cameras), "crs_tag": scene.crs_tag}})


def cmd_render_labels(run: Run):
    from .camera import read_cameras
    from .formats import write_label_set
    from .mesh import read_ply, write_ply
    from .training import generate_training_set

    a = run.args
    mesh, _ = read_ply(run.input("mesh", a.mesh))
    cams = read_cameras(run.input("cameras", a.cameras))
    labels = read_label_polygons(run.input("labels", a.labels))
    dtm = _read_raster(run, "dtm", a.dtm)
    ts = generate_training_set(mesh, labels, dtm, cams, a.roi_buffer, a.height_threshold, a.seed)
    n_classes = a.n_classes or int(labels.class_ids.max(initial=0))
    legend = _legend(n_classes, a.class_names)
    write_label_set(run.out, ts.images, legend, ts.metadata)
    run.outputs.extend(["labels_manifest.json", *[f"images/{c}.pgm" for c in ts.images]])
    write_ply(run.output("labeled_mesh.ply"), ts.mesh, ts.face_labels)
    run.finish({"metadata": ts.metadata})


def _n_classes_from(doc, images, objects, given):
    if given:
        return int(given)
    legend = doc.get("class_legend")
    if legend:
        return len(legend)
    seen = [int(im.max(initial=0)) for im in images.values()]
    return max(seen + [int(objects.class_ids.max(initial=0))])


def cmd_aggregate(run: Run):
    from .aggregation import aggregate_predictions
    from .camera import read_cameras
    from .formats import read_label_set
    from .mesh import read_ply, write_ply

    a = run.args
    mesh, _ = read_ply(run.input("mesh", a.mesh))
    cams = read_cameras(run.input("cameras", a.cameras))
    images, doc = read_label_set(run.input("predictions", a.predictions))
    for rel in sorted(doc["cameras"].values()):
        run.input(f"prediction:{rel}", Path(a.predictions).parent / rel)
    dtm = _read_raster(run, "dtm", a.dtm)
    objects = read_label_polygons(run.input("objects", a.objects))
    n_classes = _n_classes_from(doc, images, objects, a.n_classes)
    if n_classes < 1:
        raise InputError("could not determine the number of classes; pass --n-classes")
    res = aggregate_predictions(
        mesh, cams, images, dtm, objects, n_classes, a.roi_buffer, a.height_threshold, a.ground_weight
    )
    write_ply(run.output("labeled_mesh.ply"), res.mesh, res.face_classes)
    feats = _object_features(objects, res.objects)
    write_json(run.output("objects.geojson"), feature_collection(feats, res.metadata["crs_tag"]))
    header = ["face", "source_face", "class_id", *[f"votes_{k}" for k in range(1, n_classes + 1)]]
    src = _source_faces(res.face_map, res.mesh.n_faces)
    rows = [
        [f, int(src[f]), -1 if c == NULL_CLASS else int(c), *map(int, v)]
        for f, (c, v) in enumerate(zip(res.face_classes, res.votes))
    ]
    _write_csv(run, "face_classes.csv", header, rows)
    write_json(run.output("metadata.json"), res.metadata)
    run.finish({"metadata": res.metadata})


def _source_faces(old_to_new, n_new):
    """Invert an old -> new face map (-1 for dropped faces)."""
    old_to_new = np.asarray(old_to_new)
    src = np.full(n_new, -1, dtype=np.int64)
    kept = old_to_new >= 0
    src[old_to_new[kept]] = np.flatnonzero(kept)
    return src


def cmd_classify_objects(run: Run):
    from .aggregation import classify_objects
    from .mesh import face_height_above_ground, read_ply

    a = run.args
    mesh, labels = read_ply(run.input("mesh", a.mesh))
    if labels is None:
        raise InputError(f"{a.mesh}: mesh has no per-face class_id property")
    objects = read_label_polygons(run.input("objects", a.objects))
    dtm = _read_raster(run, "dtm", a.dtm)
    crs = check_crs(objects.crs_tag, dtm.crs_tag)
    ground = face_height_above_ground(mesh, dtm) < a.height_threshold
    n_classes = a.n_classes or int(labels.max(initial=0))
    preds = classify_objects(mesh, labels, objects, ground, a.ground_weight, n_classes)
    write_json(run.output("objects.geojson"), feature_collection(_object_features(objects, preds), crs))
    run.finish()


def cmd_ortho_tile(run: Run):
    from .formats import write_pgm
    from .ortho import rasterize_labels, tile_chips

    a = run.args
    raster = _read_raster(run, "raster", a.raster)
    grid = tile_chips(raster.rows, raster.cols, a.chip_size)
    labels = read_label_polygons(run.input("labels", a.labels)) if a.labels else None
    if labels is not None:
        check_crs(labels.crs_tag, raster.crs_tag)
        label_grid = rasterize_labels(labels, raster)
    s = grid.chip_size
    files, label_files = [], []
    for r0, c0 in grid.origins:
        x0, y0 = raster.pixel_to_world(r0, c0)
        chip = GeoRaster(
            raster.values[r0 : r0 + s, c0 : c0 + s],
            (float(x0), raster.transform[1], raster.transform[2], float(y0), raster.transform[4], raster.transform[5]),
            raster.nodata,
            raster.crs_tag,
        )
        rel = f"chips/raster_{r0}_{c0}.asc"
        _write_raster(run, rel, chip)
        files.append(rel)
        if labels is not None:
            rel = f"chips/label_{r0}_{c0}.pgm"
            write_pgm(run.output(rel), label_grid[r0 : r0 + s, c0 : c0 + s])
            label_files.append(rel)
    doc = {
        "chip_size": s,
        "origins": [list(o) for o in grid.origins],
        "files": files,
        "rows": raster.rows,
        "cols": raster.cols,
        "transform": list(raster.transform),
        "crs_tag": raster.crs_tag,
    }
    if labels is not None:
        doc["label_files"] = label_files
    write_json(run.output("chips.json"), doc)
    run.finish()


def cmd_ortho_aggregate(run: Run):
    from .formats import read_json, read_pgm
    from .ortho import ChipGrid, aggregate_chips, classify_crowns_from_raster

    a = run.args
    path = run.input("chips", a.chips)
    doc = read_json(path)
    try:
        s = int(doc["chip_size"])
        origins = [tuple(int(v) for v in o) for o in doc["origins"]]
        files = doc[a.files_key]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, "top level", f"bad chip manifest ({exc})") from None
    if len(files) != len(origins):
        raise FormatError(path, a.files_key, "one file per chip origin is required")
    if a.reference:
        ref = _read_raster(run, "reference", a.reference)
        rows, cols, transform, crs = ref.rows, ref.cols, ref.transform, ref.crs_tag
    else:
        try:
            rows, cols, transform = int(doc["rows"]), int(doc["cols"]), tuple(doc["transform"])
        except KeyError as exc:
            raise FormatError(path, "top level", f"missing {exc}; pass --reference") from None
        crs = doc.get("crs_tag", UNSPECIFIED_CRS)
    preds = {}
    for o, rel in zip(origins, files):
        preds[o] = read_pgm(run.input(f"chip:{rel}", path.parent / rel))
    n_classes = a.n_classes or max(int(p.max(initial=0)) for p in preds.values())
    classes, _ = aggregate_chips(preds, ChipGrid(s, tuple(origins)), rows, cols, n_classes)
    class_raster = GeoRaster(classes.astype(np.float64), transform, -1.0, crs)
    _write_raster(run, "class_raster.asc", class_raster)
    if a.crowns:
        crowns = read_label_polygons(run.input("crowns", a.crowns))
        crs = check_crs(crowns.crs_tag, crs)
        res = classify_crowns_from_raster(class_raster, crowns, n_classes)
        write_json(run.output("crowns.geojson"), feature_collection(_object_features(crowns, res), crs))
    run.finish()


def cmd_detect_trees(run: Run):
    from .formats import write_treetops
    from .trees import compute_chm, detect_treetops

    a = run.args
    dsm = _read_raster(run, "dsm", a.dsm)
    dtm = _read_raster(run, "dtm", a.dtm)
    chm = compute_chm(dsm, dtm, a.resolution, a.window)
    tops = detect_treetops(chm, a.min_height)
    _write_raster(run, "chm.asc", chm)
    write_treetops(run.output("treetops.geojson"), tops, chm.crs_tag)
    run.finish({"n_treetops": len(tops)})


def cmd_delineate_crowns(run: Run):
    from .formats import read_treetops
    from .trees import delineate_crowns

    a = run.args
    chm = _read_raster(run, "chm", a.chm)
    tops, crs = read_treetops(run.input("treetops", a.treetops))
    crs = check_crs(crs, chm.crs_tag)
    cm = delineate_crowns(chm, tops)
    _write_raster(run, "crown_ids.asc", GeoRaster(cm.ids.astype(np.float64), chm.transform, -1.0, crs))
    write_label_polygons(LabelPolygons(tuple(cm.polygons), crs), run.output("crowns.geojson"))
    run.finish({"n_crowns": int(len(np.unique(cm.ids[cm.ids > 0])))})


def cmd_match_trees(run: Run):
    from .formats import point_feature, read_field_trees, read_treetops
    from .trees import match_trees

    a = run.args
    field, fcrs = read_field_trees(run.input("field", a.field))
    tops, tcrs = read_treetops(run.input("treetops", a.treetops))
    crs = check_crs(fcrs, tcrs)
    m = match_trees(field, tops, a.height_tol, a.dist_slope, a.dist_offset)
    by_field = {f.id: f for f in field}
    _write_csv(
        run,
        "matches.csv",
        ["field_id", "treetop_id", "distance", "class_id"],
        [[f, d, repr(dist), class_to_json(by_field[f].class_id)] for f, d, dist in m.pairs],
    )
    matched = {d: by_field[f] for f, d, _ in m.pairs}
    feats = []
    for t in tops:
        ft = matched.get(t.id)
        feats.append(
            point_feature(
                t.x, t.y, treetop_id=t.id, height=t.height,
                field_id=None if ft is None else ft.id,
                class_id=None if ft is None else class_to_json(ft.class_id),
            )
        )
    write_json(run.output("matched_treetops.geojson"), feature_collection(feats, crs))
    run.finish({"n_matches": len(m.pairs)})


def _read_pairs(path):
    import csv

    truth, pred, site = [], [], []
    try:
        rows = list(csv.DictReader(Path(path).read_text().splitlines()))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    for k, row in enumerate(rows, start=2):
        try:
            truth.append(int(row["truth"]))
            p = (row.get("pred") or "").strip()
            pred.append(NULL_CLASS if p in ("", "null", "-1") else int(p))
        except (KeyError, TypeError, ValueError):
            raise FormatError(path, f"line {k}", "expected integer 'truth' and 'pred' columns") from None
        site.append(row.get("site") or "")
    return truth, pred, site


def _read_object_pairs(path):
    from .geo import load_geojson

    doc = load_geojson(path)
    truth, pred = [], []
    for k, feat in enumerate(doc.get("features", [])):
        p = feat.get("properties") or {}
        if p.get("input_class_id") is None:
            continue
        truth.append(int(p["input_class_id"]))
        pred.append(NULL_CLASS if p.get("class_id") is None else int(p["class_id"]))
    return truth, pred


def cmd_evaluate(run: Run):
    from .evaluation import confusion, metrics, read_confusion_csv, sum_confusions, write_confusion_csv

    a = run.args
    names = _split_names(a.class_names)
    per_site = {}
    if a.pairs:
        truth, pred, site = _read_pairs(run.input("pairs", a.pairs))
        n = len(names) if names else a.n_classes or int(max(max(truth, default=0), max(pred, default=0)))
        for s in sorted(set(site)):
            idx = [k for k, v in enumerate(site) if v == s]
            per_site[s or "all"] = confusion(
                [truth[k] for k in idx], [pred[k] for k in idx], n, names
            )
    for k, path in enumerate(a.objects or []):
        truth, pred = _read_object_pairs(run.input(f"objects:{k}", path))
        n = len(names) if names else a.n_classes
        if not n:
            raise InputError("--n-classes or --class-names is required with --objects")
        per_site[Path(path).stem if len(a.objects) == 1 else f"{k}:{Path(path).stem}"] = confusion(truth, pred, n, names)
    for k, path in enumerate(a.confusion or []):
        per_site[f"{k}:{Path(path).stem}"] = read_confusion_csv(run.input(f"confusion:{k}", path))
    if not per_site:
        raise InputError("nothing to evaluate: give --pairs, --objects or --confusion")
    total = sum_confusions(per_site.values())
    null_as_error = not a.null_not_error
    report = {
        "aggregate": metrics(total, null_as_error),
        "per_site": {s: metrics(cm, null_as_error) for s, cm in per_site.items() if cm.total},
        "null_as_error": null_as_error,
        "class_names": list(total.class_names),
    }
    write_confusion_csv(total, run.output("confusion.csv"))
    write_json(run.output("metrics.json"), report)
    run.finish()


# ---------------------------------------------------------------------------
# argument parsing


def _path(parser, *flags, required=False, **kw):
    action = parser.add_argument(*flags, default=None, **kw)
    paths = parser.get_default("path_options") or frozenset()
    parser.set_defaults(path_options=paths | {action.dest})
    action.required_path = required
    return action


def _threads(value):
    if value == "max":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'max'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'max'")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values (flags win)")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_DIR} or ./out)")
    common.add_argument("--threads", type=_threads, default="max", help="worker threads, integer or 'max'")

    p = argparse.ArgumentParser(prog="semamesh", description="Semantic mesh labeling toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, parents=[common], help=help, description=help)
        sp.set_defaults(func=func, path_options=frozenset())
        return sp

    sp = add("synth-scene", cmd_synth_scene, "Generate a deterministic synthetic cone-forest scene.")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trees", type=int, default=20, help="number of cone trees K")
    sp.add_argument("--extent", type=float, default=100.0, help="scene side length in meters")
    sp.add_argument("--classes", type=int, default=5)
    sp.add_argument("--cameras", type=int, default=20)
    sp.add_argument("--image-width", type=int, default=320)
    sp.add_argument("--image-height", type=int, default=240)
    sp.add_argument("--ground-cells", type=int, default=150, help="ground grid cells per side")

    sp = add("render-labels", cmd_render_labels, "Training workflow: label images from geospatial labels.")
    _path(sp, "--mesh", required=True)
    _path(sp, "--cameras", required=True)
    _path(sp, "--labels", required=True)
    _path(sp, "--dtm", required=True)
    sp.add_argument("--roi-buffer", type=float, default=50.0)
    sp.add_argument("--height-threshold", type=float, default=2.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-classes", type=int, default=None)
    sp.add_argument("--class-names", default=None, help="comma separated names for classes 1..N")

    sp = add("aggregate", cmd_aggregate, "Prediction workflow: fuse per-image predictions onto the mesh and objects.")
    _path(sp, "--mesh", required=True)
    _path(sp, "--cameras", required=True)
    _path(sp, "--predictions", required=True, help="label-set manifest (camera id -> PGM)")
    _path(sp, "--dtm", required=True)
    _path(sp, "--objects", required=True)
    sp.add_argument("--roi-buffer", type=float, default=50.0)
    sp.add_argument("--height-threshold", type=float, default=2.0)
    sp.add_argument("--ground-weight", type=float, default=0.01)
    sp.add_argument("--n-classes", type=int, default=None)

    sp = add("classify-objects", cmd_classify_objects, "Area-weighted object classes from a labeled mesh.")
    _path(sp, "--mesh", required=True, help="PLY with per-face class_id")
    _path(sp, "--objects", required=True)
    _path(sp, "--dtm", required=True)
    sp.add_argument("--height-threshold", type=float, default=2.0)
    sp.add_argument("--ground-weight", type=float, default=0.01)
    sp.add_argument("--n-classes", type=int, default=None)

    sp = add("ortho-tile", cmd_ortho_tile, "Cut an orthomosaic raster into 50%%-overlap chips.")
    _path(sp, "--raster", required=True)
    _path(sp, "--labels", help="optional label polygons rasterized into PGM chips")
    sp.add_argument("--chip-size", type=int, default=256)

    sp = add("ortho-aggregate", cmd_ortho_aggregate, "Blend chip predictions and classify crowns.")
    _path(sp, "--chips", required=True, help="chip manifest JSON")
    _path(sp, "--reference", help="raster defining the output grid")
    _path(sp, "--crowns", help="crown polygons to classify")
    sp.add_argument("--files-key", default="files", help="manifest key listing the prediction PGMs")
    sp.add_argument("--n-classes", type=int, default=None)

    sp = add("detect-trees", cmd_detect_trees, "Canopy height model and treetop detection.")
    _path(sp, "--dsm", required=True)
    _path(sp, "--dtm", required=True)
    sp.add_argument("--resolution", type=float, default=0.25)
    sp.add_argument("--window", type=int, default=7)
    sp.add_argument("--min-height", type=float, default=5.0)

    sp = add("delineate-crowns", cmd_delineate_crowns, "Crown segments around treetops.")
    _path(sp, "--chm", required=True)
    _path(sp, "--treetops", required=True)

    sp = add("match-trees", cmd_match_trees, "Greedy matching of field trees to detected treetops.")
    _path(sp, "--field", required=True)
    _path(sp, "--treetops", required=True)
    sp.add_argument("--height-tol", type=float, default=0.5)
    sp.add_argument("--dist-slope", type=float, default=0.1)
    sp.add_argument("--dist-offset", type=float, default=1.0)

    sp = add("evaluate", cmd_evaluate, "Confusion matrix and accuracy / macro metrics.")
    _path(sp, "--pairs", help="CSV with truth,pred[,site] columns")
    _path(sp, "--objects", nargs="+", help="object GeoJSON files from aggregate")
    _path(sp, "--confusion", nargs="+", help="confusion CSV files to sum")
    sp.add_argument("--n-classes", type=int, default=None)
    sp.add_argument("--class-names", default=None)
    sp.add_argument("--null-not-error", action="store_true", help="drop null predictions instead of counting them")
    return p


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise InputError(f"unknown command {name}")


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        from .formats import read_json

        cfg = read_json(args.config)
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions}
        values = {}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if dest not in known or dest in ("config", "help"):
                raise InputError(f"{args.config}: unknown option '{key}' for {args.command}")
            values[dest] = val
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    sp = _subparser(parser, args.command)
    missing = [
        a.option_strings[0] for a in sp._actions if getattr(a, "required_path", False) and getattr(args, a.dest) is None
    ]
    if missing:
        raise InputError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    if args.out is None:
        args.out = os.environ.get(ENV_OUTPUT_DIR) or "out"
    return args


def _set_threads(value):
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(limit if value == "max" else min(int(value), limit))


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        _set_threads(args.threads)
        args.func(Run(args))
    except (InputError, FormatError) as exc:
        print(f"error (input): {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyError as exc:
        print(f"error (consistency): {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        print(f"error (internal): {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
