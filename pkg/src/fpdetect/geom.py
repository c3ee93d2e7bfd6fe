"""Geometric primitives shared by the whole pipeline.

Points live in one of three frames: "camera" (optical: x right, y down,
z forward), "floor" (x forward, y left, z up, floor plane at z = 0) and
"map" (the 2D occupancy-map frame extended with z up). Clouds only ever
move forward along camera -> floor -> map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

FRAMES = ("camera", "floor", "map")

#: smallest box extent reported for degenerate (flat / single-point) inputs
MIN_EXTENT = 1e-4


class DegenerateInput(ValueError):
    """Raised when a geometric operation receives too few / collapsed points."""


class PlaneNotFound(RuntimeError):
    """Raised when RANSAC cannot produce a plane with enough inliers."""


@dataclass
class PointCloud:
    """An (N, 3) array of points in meters with optional per-point labels."""

    points: np.ndarray
    labels: np.ndarray | None = None
    frame_tag: str = "camera"

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must be an (N, 3) array")
        if not np.isfinite(self.points).all():
            raise ValueError("points must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.points):
                raise ValueError("labels length must match points")
        if self.frame_tag not in FRAMES:
            raise ValueError(f"unknown frame tag {self.frame_tag!r}")

    def __len__(self):
        return len(self.points)

    def select(self, index) -> "PointCloud":
        """Sub-cloud by boolean mask or index array; labels follow."""
        labels = self.labels[index] if self.labels is not None else None
        return PointCloud(self.points[index], labels, self.frame_tag)

    def with_frame(self, points: np.ndarray, frame_tag: str) -> "PointCloud":
        """Same cloud re-expressed in a later frame (camera -> floor -> map only)."""
        if FRAMES.index(frame_tag) < FRAMES.index(self.frame_tag):
            raise ValueError(f"cannot move frame {self.frame_tag!r} back to {frame_tag!r}")
        return PointCloud(points, self.labels, frame_tag)


@dataclass
class Eigens:
    """Ascending eigenvalues (m^2) of a point set's covariance, with eigenvectors."""

    values: np.ndarray   # (3,) ascending, l0 <= l1 <= l2
    vectors: np.ndarray  # (3, 3), column i pairs with values[i]

    @property
    def l0(self):
        return float(self.values[0])

    @property
    def l1(self):
        return float(self.values[1])

    @property
    def l2(self):
        return float(self.values[2])


@dataclass
class Obb:
    """Gravity-aligned (yaw-only) bounding box; width >= depth horizontally."""

    center: np.ndarray  # (3,)
    yaw: float          # radians in [0, pi)
    width: float
    depth: float
    height: float

    def contains(self, points: np.ndarray, eps: float = 1e-6) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.center
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        along = d[:, 0] * c + d[:, 1] * s
        across = -d[:, 0] * s + d[:, 1] * c
        return (
            (np.abs(along) <= self.width / 2 + eps)
            & (np.abs(across) <= self.depth / 2 + eps)
            & (np.abs(d[:, 2]) <= self.height / 2 + eps)
        )


@dataclass
class Plane:
    """Plane n . p + d = 0 with unit normal and the supporting inlier indices."""

    normal: np.ndarray
    d: float
    inlier_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.d)

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal + self.d


def radius_search(cloud: PointCloud, query, r: float) -> np.ndarray:
    """Indices of all cloud points within Euclidean distance r of query (inclusive)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if len(cloud) == 0:
        return np.empty(0, dtype=np.int64)
    q = np.asarray(query, dtype=np.float64).reshape(1, 3)
    idx, _ = _kernels.radius_neighbors(cloud.points, q, float(r))
    return idx


def grouped_covariance(points: np.ndarray, ids: np.ndarray, n_groups: int):
    """Population covariance per group: (counts, means (G,3), covs (G,3,3))."""
    counts = np.bincount(ids, minlength=n_groups)
    safe = np.maximum(counts, 1).astype(float)
    means = np.empty((n_groups, 3))
    for c in range(3):
        means[:, c] = np.bincount(ids, weights=points[:, c], minlength=n_groups) / safe
    d = points - means[ids]
    covs = np.empty((n_groups, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            v = np.bincount(ids, weights=d[:, a] * d[:, b], minlength=n_groups) / safe
            covs[:, a, b] = v
            covs[:, b, a] = v
    return counts, means, covs


def eigen_batch(points: np.ndarray, ids: np.ndarray, n_groups: int):
    """Covariance eigen-decomposition per group; eigenvalues ascending, clamped >= 0."""
    counts, means, covs = grouped_covariance(points, ids, n_groups)
    vals, vecs = np.linalg.eigh(covs)
    vals = np.maximum(vals, 0.0)
    return counts, means, vals, vecs


def covariance_eigen(points: np.ndarray) -> Eigens:
    """Eigen analysis of the covariance C = (1/N) sum (p-mu)(p-mu)^T.

    Requires at least 3 points; fully coincident points yield zero eigenvalues.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("expected an (N, 3) array")
    if len(pts) < 3:
        raise DegenerateInput(f"need >= 3 points for a covariance, got {len(pts)}")
    _, _, vals, vecs = eigen_batch(pts, np.zeros(len(pts), dtype=np.int64), 1)
    return Eigens(vals[0], vecs[0])


def obb_batch(points: np.ndarray, ids: np.ndarray, n_groups: int) -> list[Obb]:
    """Gravity-aligned OBB per group of points (grouped variant of compute_obb)."""
    counts = np.bincount(ids, minlength=n_groups)
    if (counts == 0).any():
        raise DegenerateInput("every group needs at least one point")
    safe = counts.astype(float)
    mx = np.bincount(ids, weights=points[:, 0], minlength=n_groups) / safe
    my = np.bincount(ids, weights=points[:, 1], minlength=n_groups) / safe
    dx = points[:, 0] - mx[ids]
    dy = points[:, 1] - my[ids]
    cxx = np.bincount(ids, weights=dx * dx, minlength=n_groups) / safe
    cxy = np.bincount(ids, weights=dx * dy, minlength=n_groups) / safe
    cyy = np.bincount(ids, weights=dy * dy, minlength=n_groups) / safe
    # principal direction of the 2D covariance; stable also when isotropic
    yaw = 0.5 * np.arctan2(2.0 * cxy, cxx - cyy)

    def _extents(theta):
        c, s = np.cos(theta), np.sin(theta)
        along = points[:, 0] * c[ids] + points[:, 1] * s[ids]
        across = -points[:, 0] * s[ids] + points[:, 1] * c[ids]
        lo_a = np.full(n_groups, np.inf)
        hi_a = np.full(n_groups, -np.inf)
        lo_b = np.full(n_groups, np.inf)
        hi_b = np.full(n_groups, -np.inf)
        np.minimum.at(lo_a, ids, along)
        np.maximum.at(hi_a, ids, along)
        np.minimum.at(lo_b, ids, across)
        np.maximum.at(hi_b, ids, across)
        return lo_a, hi_a, lo_b, hi_b

    lo_a, hi_a, lo_b, hi_b = _extents(yaw)
    w = hi_a - lo_a
    d = hi_b - lo_b
    swap = d > w
    if swap.any():
        yaw = np.where(swap, yaw + np.pi / 2, yaw)
        lo_a2, hi_a2, lo_b2, hi_b2 = _extents(yaw)
        lo_a = np.where(swap, lo_a2, lo_a)
        hi_a = np.where(swap, hi_a2, hi_a)
        lo_b = np.where(swap, lo_b2, lo_b)
        hi_b = np.where(swap, hi_b2, hi_b)
        w = hi_a - lo_a
        d = hi_b - lo_b
    yaw = np.mod(yaw, np.pi)

    lo_z = np.full(n_groups, np.inf)
    hi_z = np.full(n_groups, -np.inf)
    np.minimum.at(lo_z, ids, points[:, 2])
    np.maximum.at(hi_z, ids, points[:, 2])
    h = hi_z - lo_z

    ca, cb = (lo_a + hi_a) / 2, (lo_b + hi_b) / 2
    c, s = np.cos(yaw), np.sin(yaw)
    cx = ca * c - cb * s
    cy = ca * s + cb * c
    cz = (lo_z + hi_z) / 2
    w = np.maximum(w, MIN_EXTENT)
    d = np.maximum(d, MIN_EXTENT)
    h = np.maximum(h, MIN_EXTENT)
    return [
        Obb(np.array([cx[g], cy[g], cz[g]]), float(yaw[g]), float(w[g]), float(d[g]), float(h[g]))
        for g in range(n_groups)
    ]


def compute_obb(points: np.ndarray) -> Obb:
    """Yaw-aligned bounding box of a point set (floor frame, z vertical)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise DegenerateInput("compute_obb needs at least one point")
    return obb_batch(pts, np.zeros(len(pts), dtype=np.int64), 1)[0]


def fit_plane_ransac(
    cloud: PointCloud,
    dist_thresh: float,
    max_iters: int = 200,
    seed: int = 0,
    axis=None,
    max_angle_deg: float = 0.0,
    min_inliers: int = 3,
) -> Plane:
    """RANSAC plane fit, least-squares refined on the winning inlier set.

    When ``axis`` is given, minimal samples whose normal deviates from it by
    more than ``max_angle_deg`` are discarded (perpendicular-plane model).
    Deterministic for a fixed seed.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = len(pts)
    if n < 3:
        raise PlaneNotFound(f"need >= 3 points, got {n}")
    if dist_thresh <= 0:
        raise ValueError("dist_thresh must be positive")

    rng = np.random.default_rng(seed)
    samples = rng.integers(0, n, size=(max_iters, 3))
    valid = (
        (samples[:, 0] != samples[:, 1])
        & (samples[:, 0] != samples[:, 2])
        & (samples[:, 1] != samples[:, 2])
    )
    p0 = pts[samples[:, 0]]
    normals = np.cross(pts[samples[:, 1]] - p0, pts[samples[:, 2]] - p0)
    norms = np.linalg.norm(normals, axis=1)
    valid &= norms > 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = normals / np.where(norms > 0, norms, 1.0)[:, None]
    if axis is not None:
        ax = np.asarray(axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        valid &= np.abs(normals @ ax) >= np.cos(np.radians(max_angle_deg))
    ds = -np.einsum("ij,ij->i", normals, p0)

    best_count, best_iter = -1, -1
    chunk = 32
    for start in range(0, max_iters, chunk):
        stop = min(start + chunk, max_iters)
        sel = np.nonzero(valid[start:stop])[0]
        if len(sel) == 0:
            continue
        dist = np.abs(pts @ normals[start:stop][sel].T + ds[start:stop][sel])
        counts = (dist <= dist_thresh).sum(axis=0)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_iter = start + sel[k]
    if best_count < max(3, min_inliers):
        raise PlaneNotFound(f"best candidate has {max(best_count, 0)} inliers")

    inl = np.abs(pts @ normals[best_iter] + ds[best_iter]) <= dist_thresh
    centroid = pts[inl].mean(axis=0)
    cov = np.cov(pts[inl].T, bias=True) if inl.sum() > 1 else np.zeros((3, 3))
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    if normal @ normals[best_iter] < 0:
        normal = -normal
    d = -float(normal @ centroid)
    inl = np.abs(pts @ normal + d) <= dist_thresh
    if inl.sum() < 3:
        raise PlaneNotFound("refined plane lost its support")
    return Plane(normal, d, np.nonzero(inl)[0].astype(np.int64))
