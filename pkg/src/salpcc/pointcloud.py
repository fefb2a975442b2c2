"""Point cloud container and voxel grid quantization."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class PointCloud:
    """(n, 3) float64 positions, optionally with uint8 display colors."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"points must be (n, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise DataError("points contain NaN or inf")
        self.points = pts
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.uint8)
            if col.shape != pts.shape:
                raise DataError(f"colors must match points shape, got {col.shape}")
            self.colors = col

    @property
    def n(self) -> int:
        return self.points.shape[0]


def voxelize(points, depth: int) -> np.ndarray:
    """Quantize positions onto a 2**depth grid, dropping duplicates.

    A single uniform scale (largest axis extent mapped to 2**depth - 1)
    preserves the aspect ratio; each axis is shifted to start at zero.
    Rounding is half-away-from-zero. Duplicate voxels keep the first
    occurrence, in input order. The operation is idempotent: feeding the
    returned coordinates back in reproduces them exactly.

    Returns int64 (m, 3) with m <= n.
    """
    if not 1 <= depth <= 16:
        raise DataError(f"voxel depth must be in [1, 16], got {depth}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"points must be (n, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise DataError("cannot voxelize an empty point cloud")
    if not np.isfinite(pts).all():
        raise DataError("points contain NaN or inf")
    mins = pts.min(axis=0)
    extent = float((pts.max(axis=0) - mins).max())
    if extent == 0.0:
        raise DataError("degenerate cloud: zero extent on every axis")
    scale = (2.0**depth - 1.0) / extent
    scaled = (pts - mins) * scale
    q = np.floor(scaled + 0.5).astype(np.int64)
    _, first = np.unique(q, axis=0, return_index=True)
    return q[np.sort(first)]
