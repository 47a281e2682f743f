"""Label a synthetic forest mesh, simulate a segmentation model, and fuse its output.

Run with ``python3 demos/mesh_labeling.py``. Takes well under a minute.
"""
import numpy as np

from semamesh.aggregation import aggregate_predictions
from semamesh.evaluation import confusion, metrics
from semamesh.geo import NULL_CLASS, GeoRaster
from semamesh.ortho import aggregate_chips, classify_crowns_from_raster, rasterize_labels, tile_chips
from semamesh.synthetic import make_scene
from semamesh.training import generate_training_set

# %% A scene of 20 cone trees on flat ground, 5 species, 20 cameras
scene = make_scene(seed=1)
print(f"mesh: {scene.mesh.n_vertices} vertices, {scene.mesh.n_faces} faces")
print(f"cameras: {len(scene.cameras)}, crowns: {len(scene.crowns)}")

# %% Training workflow: crown polygons become per-camera label images
ts = generate_training_set(scene.mesh, scene.crowns, scene.dtm, scene.cameras)
img = ts.images["oblique_000"]
share = {k: float((img == k).mean()) for k in range(scene.n_classes + 1)}
print("label image oblique_000, class shares:", {k: round(v, 3) for k, v in share.items() if v})
print("faces nulled by the ground filter:", int((ts.face_labels == NULL_CLASS).sum()))

# %% A stand-in for a trained model: the label images, with every pixel
# replaced by a random class 40% of the time
rng = np.random.default_rng(0)
preds = {}
for cam_id, img in ts.images.items():
    noisy = rng.random(img.shape) < 0.4
    preds[cam_id] = np.where(noisy, rng.integers(1, scene.n_classes + 1, img.shape), img)

# %% Prediction workflow: many noisy views vote on each face, faces vote on each crown
res = aggregate_predictions(scene.mesh, scene.cameras, preds, scene.dtm, scene.crowns, scene.n_classes)
truth = [p.class_id for p in scene.crowns]
mesh_pred = [o.class_id for o in res.objects]
print("mesh-based:", metrics(confusion(truth, mesh_pred, scene.n_classes))["accuracy"])

# %% The orthomosaic baseline sees each crown once, from above, through the same noisy model
ortho = GeoRaster(np.zeros(scene.dsm.shape), scene.dsm.transform, crs_tag=scene.crs_tag)
labels = rasterize_labels(scene.crowns, ortho)
grid = tile_chips(ortho.rows, ortho.cols, 64)
chips = {}
for r0, c0 in grid.origins:
    chip = labels[r0 : r0 + 64, c0 : c0 + 64]
    noisy = rng.random(chip.shape) < 0.4
    chips[(r0, c0)] = np.where(noisy, rng.integers(1, scene.n_classes + 1, chip.shape), chip)
classes, _ = aggregate_chips(chips, grid, ortho.rows, ortho.cols, scene.n_classes)
raster = GeoRaster(classes.astype(float), ortho.transform, -1.0, scene.crs_tag)
ortho_pred = [p.class_id for p in classify_crowns_from_raster(raster, scene.crowns, scene.n_classes)]
print("ortho baseline:", metrics(confusion(truth, ortho_pred, scene.n_classes))["accuracy"])
# Both recover every crown here: the simulated noise is independent per pixel,
# so a crown-wide vote cancels it. Real model errors are spatially correlated,
# which is where the extra views of the mesh approach pay off.
