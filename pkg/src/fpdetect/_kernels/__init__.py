"""Hot-kernel dispatch: compiled Cython core when available, NumPy otherwise.

``IMPLEMENTATION`` reports which backend was selected ("compiled" or
"python"). Set FPDETECT_PURE_PYTHON=1 to force the NumPy fallback.
"""
import os

from . import _fallback

if os.environ.get("FPDETECT_PURE_PYTHON"):
    _impl = _fallback
    IMPLEMENTATION = "python"
else:
    try:
        from . import _core as _impl
        IMPLEMENTATION = "compiled"
    except ImportError:
        _impl = _fallback
        IMPLEMENTATION = "python"

radius_neighbors = _impl.radius_neighbors
neighborhood_cov = _impl.neighborhood_cov
knn_mean_dist = _impl.knn_mean_dist
euclidean_labels = _impl.euclidean_labels
grow_pass = _impl.grow_pass

__all__ = [
    "IMPLEMENTATION",
    "radius_neighbors",
    "neighborhood_cov",
    "knn_mean_dist",
    "euclidean_labels",
    "grow_pass",
]
