"""Per-point saliency maps over the visible subset.

Four maps are combined into the extended saliency: geometric (normal
dispersion, sharpened by a curvature term on salient points), visibility
(the depth-spread score as-is), depth (linear near-to-far ramp) and focus
(angular distance from the optical axis). The geometric and focus maps
are min-max normalized over the visible set before mixing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_EPS_C = 1e-3  # curvature clamp: 1/(1 - e^c) diverges as c -> 0+
_EPS_F = 1e-3  # focus clamp: keeps 1/dot bounded behind the camera


def minmax_normalize(x) -> np.ndarray:
    """Map to [0,1]; a constant input maps to all 0.5 (neutral)."""
    arr = np.asarray(x, dtype=np.float64)
    lo = arr.min()
    hi = arr.max()
    if hi <= lo:
        return np.full(arr.shape, 0.5)
    return (arr - lo) / (hi - lo)


def eigen_saliency_s11(normals, neighbors) -> np.ndarray:
    """Inverse l2-norm of the eigenvalues of E E^T per neighborhood.

    E stacks the unit normals of a point and its k_g neighbors as
    columns. A perfectly flat patch of k_g + 1 aligned normals gives the
    rank-one spectrum (k_g + 1, 0, 0), hence s11 = 1/(k_g + 1).
    """
    nrm = np.asarray(normals, dtype=np.float64)
    grouped = np.concatenate([nrm[:, None, :], nrm[neighbors]], axis=1)
    r = np.einsum("nkd,nke->nde", grouped, grouped)
    lam = np.linalg.eigvalsh(r)
    return 1.0 / np.linalg.norm(lam, axis=1)


def _orthonormal_to(g1):
    """Unit vectors orthogonal to each row of g1 (Gram-Schmidt: x, then y)."""
    n = g1.shape[0]
    cand = np.tile(np.array([1.0, 0.0, 0.0]), (n, 1))
    proj = cand - np.einsum("nd,nd->n", cand, g1)[:, None] * g1
    bad = np.linalg.norm(proj, axis=1) < 1e-9
    if bad.any():
        cand[bad] = (0.0, 1.0, 0.0)
        proj[bad] = cand[bad] - (
            np.einsum("nd,nd->n", cand[bad], g1[bad])[:, None] * g1[bad]
        )
    return proj / np.linalg.norm(proj, axis=1, keepdims=True)


def _frames_batch(v_a, v_b, n_a, n_b, idx_a, idx_b):
    """Darboux frames for point pairs, all arrays (m, 3) / (m,).

    The source of a pair is the endpoint whose normal makes the smaller
    angle with the connecting line (larger |cos|); ties go to the lower
    point index. Returns (g1, g2, g3) each (m, 3).
    """
    u = v_b - v_a
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    cos_a = np.abs(np.einsum("nd,nd->n", n_a, u))
    cos_b = np.abs(np.einsum("nd,nd->n", n_b, u))
    a_is_source = (cos_a > cos_b) | ((cos_a == cos_b) & (idx_a < idx_b))
    sel = a_is_source[:, None]
    g1 = np.where(sel, n_a, n_b)
    u_st = np.where(sel, u, -u)  # source -> target direction
    g2 = np.cross(g1, u_st)
    norms = np.linalg.norm(g2, axis=1)
    ok = norms > 1e-9
    g2[ok] /= norms[ok, None]
    if (~ok).any():
        g2[~ok] = _orthonormal_to(g1[~ok])
    g3 = np.cross(g1, g2)
    return g1, g2, g3


def darboux_frame(v_i, v_j, n_i, n_j):
    """Single-pair frame; the first argument pair carries the lower index."""
    v_i = np.asarray(v_i, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    if not np.any(v_i != v_j):
        raise DataError("darboux_frame needs distinct points")
    g1, g2, g3 = _frames_batch(
        v_i[None], v_j[None],
        np.asarray(n_i, dtype=np.float64)[None],
        np.asarray(n_j, dtype=np.float64)[None],
        np.array([0]), np.array([1]),
    )
    return g1[0], g2[0], g3[0]


def curvature_metric_c(points, normals, neighbors, salient) -> np.ndarray:
    """Sum over j = 1..3 of the inverse eigenvalue norms of G_j G_j^T.

    G_j collects the j-th Darboux vector of the frames between a salient
    point and each of its k_g neighbors; the first column repeats the
    nearest-neighbor frame to reach k_g + 1 columns. Identical frames
    across a neighborhood give c = 3/(k_g + 1).
    """
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    nbr = np.asarray(neighbors, dtype=np.int64)[salient]
    m, k = nbr.shape
    if m == 0:
        return np.zeros(0)
    src = np.asarray(salient, dtype=np.int64)
    flat_a = np.repeat(src, k)
    flat_b = nbr.ravel()
    g1, g2, g3 = _frames_batch(
        pts[flat_a], pts[flat_b], nrm[flat_a], nrm[flat_b], flat_a, flat_b
    )
    c = np.zeros(m)
    for g in (g1, g2, g3):
        cols = g.reshape(m, k, 3)
        # duplicate the nearest-neighbor frame as column 0
        cols = np.concatenate([cols[:, :1, :], cols], axis=1)
        r = np.einsum("nkd,nke->nde", cols, cols)
        lam = np.linalg.eigvalsh(r)
        c += 1.0 / np.linalg.norm(lam, axis=1)
    return c


def curvature_saliency_s12(c) -> np.ndarray:
    """s12 = max(c) - 1/(1 - e^c) over the salient subset, c clamped.

    Implemented exactly as printed, which makes s12 decrease with c for
    a fixed max; the combination still amplifies the salient subset
    because every s12 value exceeds max(c).
    """
    arr = np.maximum(np.asarray(c, dtype=np.float64), _EPS_C)
    if arr.size == 0:
        return arr
    with np.errstate(over="ignore"):
        denom = 1.0 - np.exp(arr)
    return arr.max() - 1.0 / denom


def geometric_saliency(s11, s0: float, c=None, salient=None):
    """Substitute s12 for s11 above the s0 threshold, then normalize.

    Returns (s1_raw, s1_normalized). `salient` holds the indices with
    s11 > s0 and `c` their curvature metric; both may be empty.
    """
    s1_raw = np.asarray(s11, dtype=np.float64).copy()
    if salient is not None and len(salient) > 0:
        s1_raw[salient] = curvature_saliency_s12(c)
    return s1_raw, minmax_normalize(s1_raw)


def depth_saliency(depths, z_near: float, z_far: float) -> np.ndarray:
    """Linear ramp: 1 at the near plane, 0 at the far plane, clamped."""
    if not z_near < z_far:
        raise DataError(f"need z_near < z_far, got {z_near}, {z_far}")
    d = np.asarray(depths, dtype=np.float64)
    return np.clip(1.0 - (d - z_near) / (z_far - z_near), 0.0, 1.0)


def focus_saliency(points, eye, view_dir, m: float = 1.0):
    """Angular falloff from the optical axis.

    dot = clamp(r_hat . p_hat, eps, 1) with p_hat from the eye toward the
    point; raw s4 = 1 - sqrt(1/dot)^m, which is 0 on the axis and drops
    as the angle grows. Returns (s4_raw, min-max normalized s4).
    """
    pts = np.asarray(points, dtype=np.float64)
    eye = np.asarray(eye, dtype=np.float64)
    r_hat = np.asarray(view_dir, dtype=np.float64)
    r_hat = r_hat / np.linalg.norm(r_hat)
    p = pts - eye
    norms = np.linalg.norm(p, axis=1, keepdims=True)
    if (norms == 0).any():
        raise DataError("point coincides with the eye")
    p /= norms
    dot = np.clip(p @ r_hat, _EPS_F, 1.0)
    s4_raw = 1.0 - (1.0 / dot) ** (0.5 * m)
    return s4_raw, minmax_normalize(s4_raw)


def extended_saliency(s1, s2, s3, s4, weights=(1.0, 1.0, 0.1, 0.1),
                      strict_paper_mode: bool = False) -> np.ndarray:
    """Weighted average of the four maps.

    strict_paper_mode reproduces the printed combination, whose fourth
    term reuses the geometric map instead of the focus map.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or (w < 0).any():
        raise DataError(f"weights must be 4 non-negative scalars, got {weights}")
    total = w.sum()
    if total <= 0:
        raise DataError("weight sum must be positive")
    fourth = s1 if strict_paper_mode else s4
    return (w[0] * np.asarray(s1) + w[1] * np.asarray(s2)
            + w[2] * np.asarray(s3) + w[3] * fourth) / total


@dataclass
class SaliencyBundle:
    """All per-visible-point maps plus the combined result."""

    s11: np.ndarray
    s0: float
    s1_raw: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    s4_raw: np.ndarray
    s4: np.ndarray
    s: np.ndarray


def compute_saliency(points_vis, normals_vis, a_vis, depths_vis, cam,
                     k_g: int = 25, m: float = 1.0,
                     weights=(1.0, 1.0, 0.1, 0.1),
                     strict_paper_mode: bool = False,
                     workers: int = 1) -> SaliencyBundle:
    """Full saliency stack over the visible subset.

    The k_g neighborhood graph is built in 3-D over visible points only
    (clamped for tiny clouds). Normals are taken as given (the pipeline
    estimates them once on the full cloud).
    """
    from .geometry import knn_indices

    pts = np.asarray(points_vis, dtype=np.float64)
    n_v = pts.shape[0]
    if n_v == 0:
        raise DataError("no visible points")
    k_eff = min(k_g, n_v - 1)
    if k_eff >= 1:
        nbr = knn_indices(pts, k_eff, workers=workers)
    else:
        nbr = np.zeros((n_v, 0), dtype=np.int64)

    s11 = eigen_saliency_s11(normals_vis, nbr)
    s0 = 2.0 * float(s11.mean())
    salient = np.flatnonzero(s11 > s0)
    if salient.size > 0 and k_eff >= 1:
        c = curvature_metric_c(pts, normals_vis, nbr, salient)
    else:
        salient = np.zeros(0, dtype=np.int64)
        c = np.zeros(0)
    s1_raw, s1 = geometric_saliency(s11, s0, c, salient)
    s2 = np.asarray(a_vis, dtype=np.float64)
    s3 = depth_saliency(depths_vis, cam.z_near, cam.z_far)
    s4_raw, s4 = focus_saliency(pts, cam.eye, cam.view_dir, m)
    s = extended_saliency(s1, s2, s3, s4, weights, strict_paper_mode)
    return SaliencyBundle(
        s11=s11, s0=s0, s1_raw=s1_raw, s1=s1, s2=s2, s3=s3,
        s4_raw=s4_raw, s4=s4, s=s,
    )
