"""Camera model, screen-space projection and the visibility operator."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import knn_indices


@dataclass
class CameraPose:
    """Pinhole camera: eye position, view direction, frustum, image size."""

    eye: np.ndarray
    view_dir: np.ndarray
    z_near: float
    z_far: float
    image_size: tuple = (1024, 1024)
    fov_deg: float = 60.0

    def __post_init__(self):
        self.eye = np.asarray(self.eye, dtype=np.float64).reshape(3)
        self.view_dir = np.asarray(self.view_dir, dtype=np.float64).reshape(3)
        if np.linalg.norm(self.view_dir) == 0:
            raise DataError("view_dir must be nonzero")
        if not 0 < self.z_near < self.z_far:
            raise DataError(f"need 0 < z_near < z_far, got {self.z_near}, {self.z_far}")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise DataError(f"image dimensions must be >= 1, got {self.image_size}")
        if not 0 < self.fov_deg < 180:
            raise DataError(f"fov must be in (0, 180) degrees, got {self.fov_deg}")


def default_camera(points, fov_deg: float = 60.0, image_size=(1024, 1024)) -> CameraPose:
    """Camera above the cloud center looking straight down -z.

    Eye height above the center is twice the half-extent in z (for a
    centered cloud this is eye (0, 0, 2 max_z) with direction
    (0, 0, -2 max_z)). Flat clouds (zero z extent) fall back to the
    largest half-extent so the eye never touches the cloud. Clip planes
    default to 0.1x and 4x the largest axis extent.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise DataError(f"points must be non-empty (n, 3), got {pts.shape}")
    mins = pts.min(axis=0)
    maxs = pts.max(axis=0)
    half = (maxs - mins) / 2.0
    extent = float((maxs - mins).max())
    if extent == 0.0:
        raise DataError("degenerate cloud: zero extent on every axis")
    hz = float(half[2]) if half[2] > 0 else float(half.max())
    center = (mins + maxs) / 2.0
    eye = center + np.array([0.0, 0.0, 2.0 * hz])
    return CameraPose(
        eye=eye,
        view_dir=np.array([0.0, 0.0, -2.0 * hz]),
        z_near=0.1 * extent,
        z_far=4.0 * extent,
        image_size=tuple(image_size),
        fov_deg=fov_deg,
    )


@dataclass
class ScreenProjection:
    """Per-point pixel coordinates, Euclidean depths, frustum flags."""

    pixels: np.ndarray  # (n, 2) float64; (-1, -1) for out-of-frustum points
    depths: np.ndarray  # (n,) float64, |v - eye|
    in_frustum: np.ndarray  # (n,) bool


def camera_frame(cam: CameraPose):
    """Orthonormal (right, up, forward) for the look-at transform."""
    f = cam.view_dir / np.linalg.norm(cam.view_dir)
    up0 = np.array([0.0, 1.0, 0.0])
    if abs(f @ up0) > 1.0 - 1e-6:
        up0 = np.array([0.0, 0.0, 1.0])
    right = np.cross(f, up0)
    right /= np.linalg.norm(right)
    up = np.cross(right, f)
    return right, up, f


def project(points, cam: CameraPose) -> ScreenProjection:
    """Look-at, perspective and viewport transform.

    Depth is the Euclidean distance to the eye, not the z-buffer value.
    A point coincident with the eye is flagged out-of-frustum rather than
    dividing by zero.
    """
    pts = np.asarray(points, dtype=np.float64)
    right, up, fwd = camera_frame(cam)
    rel = pts - cam.eye
    xv = rel @ right
    yv = rel @ up
    zv = rel @ fwd
    depths = np.linalg.norm(rel, axis=1)

    w, h = cam.image_size
    tan_half = np.tan(np.radians(cam.fov_deg) / 2.0)
    aspect = w / h
    ahead = zv > 0
    denom = np.where(ahead, zv, 1.0)
    x_ndc = xv / (denom * tan_half * aspect)
    y_ndc = yv / (denom * tan_half)
    in_frustum = (
        ahead
        & (zv >= cam.z_near)
        & (zv <= cam.z_far)
        & (np.abs(x_ndc) <= 1.0)
        & (np.abs(y_ndc) <= 1.0)
    )
    pixels = np.full((pts.shape[0], 2), -1.0)
    pixels[in_frustum, 0] = (x_ndc[in_frustum] + 1.0) / 2.0 * w
    pixels[in_frustum, 1] = (1.0 - y_ndc[in_frustum]) / 2.0 * h
    return ScreenProjection(pixels=pixels, depths=depths, in_frustum=in_frustum)


def visibility_operator(proj: ScreenProjection, k_a: int = 125, workers: int = 1) -> np.ndarray:
    """Exponential depth score per point, in (0, 1] for in-frustum points.

    The screen-space neighborhood of i is i itself plus its k_a - 1
    nearest in-frustum points by pixel distance, so d_min <= d_i <= d_max
    always holds. Out-of-frustum points score 0. A neighborhood with no
    depth spread scores 1.
    """
    n = proj.depths.shape[0]
    if k_a < 1:
        raise DataError(f"k_a must be >= 1, got {k_a}")
    if k_a >= n:
        raise DataError(f"k_a must be < n, got k_a={k_a}, n={n}")
    a = np.zeros(n, dtype=np.float64)
    sub = np.flatnonzero(proj.in_frustum)
    nf = sub.size
    if nf == 0:
        return a
    d_sub = proj.depths[sub]
    k_eff = min(k_a - 1, nf - 1)
    if k_eff >= 1:
        nbr = knn_indices(proj.pixels[sub], k_eff, workers=workers)
        nd = d_sub[nbr]
        d_min = np.minimum(nd.min(axis=1), d_sub)
        d_max = np.maximum(nd.max(axis=1), d_sub)
    else:
        d_min = d_sub
        d_max = d_sub
    spread = d_max - d_min
    ratio = np.zeros(nf)
    np.divide(d_sub - d_min, spread, out=ratio, where=spread > 0)
    a[sub] = np.exp(-(ratio**2))
    return a


@dataclass
class VisibilityResult:
    a: np.ndarray  # (n,) scores
    visible_mask: np.ndarray  # (n,) bool
    threshold: float


def classify_visible(a) -> VisibilityResult:
    """Mean-threshold split: visible iff a_i >= mean(a) and in frustum."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        raise DataError("empty visibility scores")
    # mean <= max mathematically; float summation can break it for
    # all-equal input, which must classify as all-visible
    thr = min(float(arr.mean()), float(arr.max()))
    # a == 0 marks out-of-frustum points, which stay non-visible even
    # when the threshold degenerates to zero
    mask = (arr >= thr) & (arr > 0)
    if not mask.any():
        raise DataError("no visible points (cloud entirely outside the frustum?)")
    return VisibilityResult(a=arr, visible_mask=mask, threshold=thr)
