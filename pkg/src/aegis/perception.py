"""RGB-D grounding: detection box + depth views -> obstacle ellipsoid.

The pipeline is a fixed chain of subset operations on the point multiset:

    backproject (per view) -> fuse -> crop to workspace -> trim farthest 20%
        -> keep largest density cluster -> fit MVEE

Back-projection follows the pinhole model: a pixel (u, v) with depth d maps
to T_cam->world applied to K^-1 d (u, v, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .errors import EmptyCloud, EmptyRegion, NoCluster, PipelineEmpty
from .geometry import Ellipsoid, PointCloud, fit_mvee

_ORTHO_TOL = 1e-9


def _frozen(values, shape):
    arr = np.array(values, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics K plus a rigid camera-to-world extrinsic."""

    intrinsics: np.ndarray  # (3, 3) upper-triangular, K[2][2] == 1
    extrinsic: np.ndarray   # (4, 4) T_cam->world

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", _frozen(self.intrinsics, (3, 3)))
        object.__setattr__(self, "extrinsic", _frozen(self.extrinsic, (4, 4)))
        k = self.intrinsics
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if abs(k[2, 2] - 1.0) > 1e-12 or abs(k[1, 0]) > 1e-12 \
                or abs(k[2, 0]) > 1e-12 or abs(k[2, 1]) > 1e-12:
            raise ValueError("intrinsics must be upper-triangular with K[2][2] = 1")
        r = self.extrinsic[:3, :3]
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise ValueError("extrinsic rotation must be orthonormal within 1e-9")
        if not np.allclose(self.extrinsic[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("extrinsic must be a rigid transform")


@dataclass(frozen=True)
class DepthView:
    """Row-major depth grid in meters; d <= 0 or non-finite marks invalid."""

    width: int
    height: int
    depth: np.ndarray  # (height, width)
    camera: CameraModel

    def __post_init__(self):
        arr = np.array(self.depth, dtype=np.float64).reshape(self.height, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "depth", arr)


@dataclass(frozen=True)
class BBox:
    """Pixel-space detection box with confidence in [0, 1]."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError("bbox must satisfy u_min < u_max and v_min < v_max")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class WorkspaceBounds:
    """Axis-aligned workspace; membership uses strict inequalities."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _frozen(self.min_corner, (3,)))
        object.__setattr__(self, "max_corner", _frozen(self.max_corner, (3,)))
        if not np.all(self.min_corner < self.max_corner):
            raise ValueError("workspace min corner must be strictly below max corner")

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p > self.min_corner) and np.all(p < self.max_corner))


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the preprocessing chain feeding the MVEE fit."""

    trim_fraction: float = 0.2
    cluster_radius: float = 0.02
    cluster_min_neighbors: int = 5
    mvee_tolerance: float = 1e-7
    inflate: bool = True
    inflate_floor: float = 0.005


def backproject(view: DepthView, region: BBox) -> PointCloud:
    """Lift every valid-depth pixel inside the region to the world frame."""
    u0 = max(int(math.ceil(region.u_min)), 0)
    u1 = min(int(math.floor(region.u_max)), view.width - 1)
    v0 = max(int(math.ceil(region.v_min)), 0)
    v1 = min(int(math.floor(region.v_max)), view.height - 1)
    if u0 > u1 or v0 > v1:
        raise EmptyRegion("bounding box covers no pixel centers")
    us, vs = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
    us = us.reshape(-1).astype(np.float64)
    vs = vs.reshape(-1).astype(np.float64)
    d = view.depth[v0 : v1 + 1, u0 : u1 + 1].reshape(-1)
    valid = np.isfinite(d) & (d > 0.0)
    if not np.any(valid):
        raise EmptyRegion("no pixel in the region carries valid depth")
    us, vs, d = us[valid], vs[valid], d[valid]
    k = view.camera.intrinsics
    fx, fy, cx, cy = k[0, 0], k[1, 1], k[0, 2], k[1, 2]
    skew = k[0, 1]
    y_cam = (vs - cy) / fy
    x_cam = (us - cx - skew * y_cam) / fx
    pts_cam = np.column_stack([x_cam * d, y_cam * d, d])
    t = view.camera.extrinsic
    return pts_cam @ t[:3, :3].T + t[:3, 3]


def fuse_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    """Concatenate world-frame clouds, preserving input order."""
    parts = [np.asarray(c, dtype=np.float64).reshape(-1, 3) for c in clouds]
    if not parts:
        return np.zeros((0, 3))
    return np.concatenate(parts, axis=0)


def crop_workspace(cloud: PointCloud, bounds: WorkspaceBounds) -> PointCloud:
    """Keep exactly the points strictly inside the workspace box."""
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    keep = np.all((pts > bounds.min_corner) & (pts < bounds.max_corner), axis=1)
    return pts[keep]


def trim_farthest(cloud: PointCloud, fraction: float) -> PointCloud:
    """Drop the ceil(fraction * n) points farthest from the centroid.

    Ties in distance keep the earlier-indexed point; the survivors retain
    their input order.
    """
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n == 0:
        raise EmptyCloud("cannot trim an empty cloud")
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    drop = math.ceil(fraction * n)
    if drop == 0:
        return pts
    d = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    # stable sort ascending by (distance, index): the last `drop` entries are
    # the farthest, with later indices dropped first on ties
    order = np.argsort(d, kind="stable")
    keep_idx = np.sort(order[: n - drop])
    return pts[keep_idx]


def largest_cluster(cloud: PointCloud, radius: float, min_neighbors: int) -> PointCloud:
    """Most populous density cluster (DBSCAN-style); noise never returned.

    ``min_neighbors`` follows the usual DBSCAN convention: the number of
    points within ``radius`` (the point itself included) needed to make a
    core point.  Size ties pick the cluster containing the lowest point
    index.
    """
    from sklearn.cluster import DBSCAN

    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyCloud("cannot cluster an empty cloud")
    labels = DBSCAN(eps=radius, min_samples=min_neighbors).fit(pts).labels_
    ids = [int(l) for l in np.unique(labels) if l >= 0]
    if not ids:
        raise NoCluster("every point classified as noise")
    best = None
    for cid in ids:
        members = np.nonzero(labels == cid)[0]
        key = (-members.size, int(members.min()))
        if best is None or key < best[0]:
            best = (key, members)
    return pts[best[1]]


def obstacle_pipeline(
    views: Sequence[DepthView],
    region: Union[BBox, Sequence[BBox]],
    bounds: WorkspaceBounds,
    config: PipelineConfig = PipelineConfig(),
) -> Ellipsoid:
    """Full grounding chain from depth views to the obstacle ellipsoid.

    ``region`` may be a single box applied to every view or one box per view.
    """
    if isinstance(region, BBox):
        regions: List[BBox] = [region] * len(views)
    else:
        regions = list(region)
        if len(regions) != len(views):
            raise ValueError("need one bounding box per view")
    parts = []
    for view, box in zip(views, regions):
        try:
            parts.append(backproject(view, box))
        except EmptyRegion:
            continue
    cloud = fuse_clouds(parts)
    if cloud.shape[0] == 0:
        raise EmptyRegion("no view supplied valid depth inside its region")
    cloud = crop_workspace(cloud, bounds)
    if cloud.shape[0] == 0:
        raise PipelineEmpty("workspace crop removed every point")
    cloud = trim_farthest(cloud, config.trim_fraction)
    if cloud.shape[0] == 0:
        raise PipelineEmpty("outlier trim removed every point")
    cloud = largest_cluster(cloud, config.cluster_radius, config.cluster_min_neighbors)
    return fit_mvee(
        cloud,
        config.mvee_tolerance,
        inflate=config.inflate,
        floor=config.inflate_floor,
    )


# ---------------------------------------------------------------------------
# Depth-view container files
# ---------------------------------------------------------------------------

def save_depth_view(path_base: Union[str, Path], view: DepthView) -> None:
    """Write ``<base>.depth`` (header + row-major floats) and ``<base>.cam``."""
    base = Path(path_base)
    with open(base.with_suffix(".depth"), "w") as fh:
        fh.write(f"{view.width} {view.height}\n")
        for row in view.depth:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    k = view.camera.intrinsics.reshape(-1)
    t = view.camera.extrinsic.reshape(-1)
    with open(base.with_suffix(".cam"), "w") as fh:
        fh.write(" ".join(repr(float(v)) for v in k) + "\n")
        fh.write(" ".join(repr(float(v)) for v in t) + "\n")


def load_depth_view(path_base: Union[str, Path]) -> DepthView:
    base = Path(path_base)
    text = base.with_suffix(".depth").read_text().split("\n")
    width, height = (int(tok) for tok in text[0].split())
    values = [float(tok) for line in text[1:] for tok in line.split()]
    if len(values) != width * height:
        raise ValueError(
            f"depth file holds {len(values)} values, expected {width * height}"
        )
    cam_lines = base.with_suffix(".cam").read_text().split("\n")
    k = np.array([float(t) for t in cam_lines[0].split()]).reshape(3, 3)
    t = np.array([float(t) for t in cam_lines[1].split()]).reshape(4, 4)
    depth = np.array(values, dtype=np.float64).reshape(height, width)
    return DepthView(width, height, depth, CameraModel(k, t))
