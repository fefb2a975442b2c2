"""Geometry quality metrics: point-to-point and point-to-plane PSNR,
Bjontegaard-style curve differences, error heatmaps, saliency layers."""

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError
from .pointcloud import PointCloud

_HEAT_STOPS = np.array([
    [0, 0, 255],  # blue
    [0, 255, 255],  # cyan
    [0, 255, 0],  # green
    [255, 255, 0],  # yellow
    [255, 0, 0],  # red
], dtype=np.float64)


def _as_points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise DataError(f"need a non-empty (n, 3) cloud, got {pts.shape}")
    return pts


def nn_error_vectors(reference, degraded, workers: int = 1):
    """Error vector to the nearest degraded point, per reference point."""
    ref = _as_points(reference)
    deg = _as_points(degraded)
    _, idx = cKDTree(deg).query(ref, k=1, workers=workers)
    return deg[idx] - ref


def d_rms(reference, degraded, workers: int = 1) -> float:
    err = nn_error_vectors(reference, degraded, workers)
    return float(np.sqrt((err * err).sum(axis=1).mean()))


def d_p2plane(reference, degraded, reference_normals=None,
              workers: int = 1) -> float:
    """RMS of the error vector projected on the reference normal."""
    ref = _as_points(reference)
    if reference_normals is None:
        from .geometry import estimate_normals, knn_indices

        k = min(6, ref.shape[0] - 1)
        if k < 1:
            raise DataError("cannot estimate normals on a single point")
        reference_normals = estimate_normals(ref, knn_indices(ref, k))
    nrm = np.asarray(reference_normals, dtype=np.float64)
    err = nn_error_vectors(ref, degraded, workers)
    proj = np.einsum("nd,nd->n", err, nrm)
    return float(np.sqrt((proj * proj).mean()))


def symmetric(metric, a, b, **kwargs) -> float:
    return max(metric(a, b, **kwargs), metric(b, a, **kwargs))


def bandwidth(cloud) -> float:
    """Largest axis extent; the PSNR peak value."""
    pts = _as_points(cloud)
    return float((pts.max(axis=0) - pts.min(axis=0)).max())


def psnr_geom(reference, degraded, mode: str = "d1",
              bandwidth_from: str = "degraded", workers: int = 1) -> float:
    """Symmetric geometry PSNR in dB; +inf for a perfect match.

    The peak is the max axis extent of the degraded cloud; pass
    bandwidth_from="reference" to compare against tools that use the
    original instead.
    """
    if mode not in ("d1", "d2"):
        raise DataError(f"mode must be 'd1' or 'd2', got {mode!r}")
    if bandwidth_from not in ("degraded", "reference"):
        raise DataError(f"bad bandwidth_from {bandwidth_from!r}")
    bw = bandwidth(degraded if bandwidth_from == "degraded" else reference)
    if bw <= 0:
        raise DataError("degenerate cloud: zero extent on every axis")
    if mode == "d1":
        d = symmetric(d_rms, reference, degraded, workers=workers)
    else:
        d = symmetric(d_p2plane, reference, degraded, workers=workers)
    if d == 0.0:
        return float("inf")
    return float(10.0 * np.log10(bw * bw / (d * d)))


def bd_psnr(rates_a, psnrs_a, rates_b, psnrs_b) -> float:
    """Average dB gap of curve A over curve B at matched rate.

    Cubic fits of PSNR against log10(bpp), integrated over the common
    rate range; positive output means curve A sits above curve B.
    """
    ra = np.asarray(rates_a, dtype=np.float64)
    pa = np.asarray(psnrs_a, dtype=np.float64)
    rb = np.asarray(rates_b, dtype=np.float64)
    pb = np.asarray(psnrs_b, dtype=np.float64)
    for r, p in ((ra, pa), (rb, pb)):
        if r.shape[0] < 4 or r.shape != p.shape:
            raise DataError("each curve needs >= 4 (rate, psnr) points")
        if (r <= 0).any():
            raise DataError("rates must be positive")
        if not np.isfinite(p).all():
            raise DataError("curve PSNR values must be finite")
    la = np.log10(ra)
    lb = np.log10(rb)
    lo = max(la.min(), lb.min())
    hi = min(la.max(), lb.max())
    if hi <= lo:
        raise DataError("rate ranges do not overlap")
    fit_a = np.polyfit(la, pa, 3)
    fit_b = np.polyfit(lb, pb, 3)
    grid = np.linspace(lo, hi, 1000)
    gap = np.polyval(fit_a, grid) - np.polyval(fit_b, grid)
    return float(np.trapezoid(gap, grid) / (hi - lo))


def ramp_colors(values) -> np.ndarray:
    """Min-max normalize and map through the blue-to-red five-stop ramp."""
    vals = np.asarray(values, dtype=np.float64)
    lo = vals.min()
    hi = vals.max()
    if hi <= lo:
        t = np.zeros(vals.shape[0])
    else:
        t = (vals - lo) / (hi - lo)
    pos = t * (len(_HEAT_STOPS) - 1)
    i0 = np.minimum(pos.astype(np.int64), len(_HEAT_STOPS) - 2)
    frac = (pos - i0)[:, None]
    rgb = _HEAT_STOPS[i0] * (1.0 - frac) + _HEAT_STOPS[i0 + 1] * frac
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


def error_heatmap(reference, degraded, workers: int = 1):
    """Color the reference by NN distance, blue (min) to red (max).

    Returns (colored PointCloud, mean distance).
    """
    ref = _as_points(reference)
    err = nn_error_vectors(ref, degraded, workers)
    dist = np.sqrt((err * err).sum(axis=1))
    colors = ramp_colors(dist)
    return PointCloud(points=ref, colors=colors), float(dist.mean())


def layer_partition(saliency_visible, visible_mask) -> np.ndarray:
    """Per-point layer labels: 1 high, 2 mid, 3 low saliency, 4 hidden.

    Boundary values (0.4, 0.7) land in the lower-saliency layer.
    """
    mask = np.asarray(visible_mask, dtype=bool)
    s = np.asarray(saliency_visible, dtype=np.float64)
    if s.shape[0] != int(mask.sum()):
        raise DataError("one saliency value per visible point required")
    labels = np.full(mask.shape[0], 4, dtype=np.int64)
    vis_labels = np.where(s > 0.7, 1, np.where(s > 0.4, 2, 3))
    labels[mask] = vis_labels
    return labels


def layer_report(labels, reference, degraded, workers: int = 1) -> dict:
    """One-sided D1 PSNR per layer; empty layers are absent.

    The reference restricts to each layer, the NN search still runs
    against the full degraded cloud.
    """
    ref = _as_points(reference)
    deg = _as_points(degraded)
    if np.asarray(labels).shape[0] != ref.shape[0]:
        raise DataError("one layer label per reference point required")
    bw = bandwidth(deg)
    if bw <= 0:
        raise DataError("degenerate cloud: zero extent on every axis")
    tree = cKDTree(deg)
    out = {}
    for layer in (1, 2, 3, 4):
        sel = np.asarray(labels) == layer
        if not sel.any():
            continue
        dist, _ = tree.query(ref[sel], k=1, workers=workers)
        d = float(np.sqrt((dist * dist).mean()))
        if d == 0.0:
            out[layer] = float("inf")
        else:
            out[layer] = float(10.0 * np.log10(bw * bw / (d * d)))
    return out
