"""Semantic mesh labeling for drone photogrammetry.

Transfers geospatial labels onto a textured mesh and renders them into the
source camera views (training), fuses per-image class predictions back onto
mesh faces and map objects (prediction), and provides the orthomosaic
baseline, canopy-height-model tree detection and evaluation metrics.
"""
import os

# numba's default TBB layer is often missing; OpenMP is always shipped.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .errors import ConsistencyError, FormatError, InputError, MissingPredictionError  # noqa: E402
from .geo import NULL_CLASS, GeoPolygon, GeoRaster, LabelPolygons  # noqa: E402
from .camera import Camera, CameraSet  # noqa: E402
from .mesh import Mesh  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "NULL_CLASS",
    "Camera",
    "CameraSet",
    "ConsistencyError",
    "FormatError",
    "GeoPolygon",
    "GeoRaster",
    "InputError",
    "LabelPolygons",
    "Mesh",
    "MissingPredictionError",
    "__version__",
]
