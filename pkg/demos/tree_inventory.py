"""From surface models to a matched tree inventory.

Run with ``python3 demos/tree_inventory.py``.
"""
import numpy as np

from semamesh.synthetic import field_survey, make_scene
from semamesh.trees import compute_chm, delineate_crowns, detect_treetops, match_trees

scene = make_scene(seed=2, n_trees=25)

# %% Canopy height: DSM minus DTM, resampled to 25 cm and smoothed over 7x7 pixels
chm = compute_chm(scene.dsm, scene.dtm)
print(f"CHM {chm.shape}, cell {chm.cellsize} m, max {chm.values.max():.1f} m")

# %% Treetops: pixels taller than everything within 0.11 x their height
tops = detect_treetops(chm)
print(f"{len(tops)} treetops for {len(scene.trees)} planted trees")

# %% Crowns grow from each top while above 10% of its height and within 0.24 x height
crowns = delineate_crowns(chm, tops)
areas = np.bincount(crowns.ids.ravel())[1:] * chm.cellsize**2
print(f"crown areas: median {np.median(areas):.1f} m2, range {areas.min():.1f}-{areas.max():.1f} m2")

# %% Field crews measured the same trees with GPS and height error
field = field_survey(scene, seed=2, jitter=0.4)
m = match_trees(field, tops)
d = np.array([dist for _, _, dist in m.pairs])
print(f"matched {len(m.pairs)}/{len(field)} field trees, mean offset {d.mean():.2f} m")

# %% The matched species labels turn detected crowns into training or test objects
species = {tid: next(f.class_id for f in field if f.id == fid) for fid, tid, _ in m.pairs}
print("species per treetop id:", dict(sorted(species.items())[:8]), "...")
