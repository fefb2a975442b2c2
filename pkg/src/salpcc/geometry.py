"""Neighborhoods, normals and the graph Laplacian.

All neighbor queries are deterministic: candidates are ordered by squared
distance recomputed in float64, with equal distances broken by ascending
point index. The result is therefore independent of KD-tree internals and
of the worker count.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .errors import DataError


def knn_indices(points, k: int, workers: int = 1) -> np.ndarray:
    """k nearest neighbors of every point, excluding the point itself.

    Returns int64 (n, k), each row sorted by (squared distance, index).
    Works for any dimension (used on 3D positions and 2D screen
    coordinates alike).
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if n < k + 1:
        raise DataError(f"need at least {k + 1} points for k={k}, got {n}")
    tree = cKDTree(pts)
    m = min(k + 2, n)
    _, raw = tree.query(pts, k=m, workers=workers)

    # exact squared distances, then (d2, index) order
    diff = pts[raw] - pts[:, None, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    order = np.lexsort((raw, d2), axis=1)
    cand = np.take_along_axis(raw, order, axis=1)
    cd2 = np.take_along_axis(d2, order, axis=1)

    # drop self (by index, robust to duplicate coordinates)
    keep = cand != np.arange(n)[:, None]
    # every row keeps >= m - 1 entries; trim to a rectangle
    out = np.empty((n, k), dtype=np.int64)
    outd2 = np.empty((n, k), dtype=np.float64)
    flat = np.where(keep)
    row_counts = keep.sum(axis=1)
    pos = np.concatenate(([0], np.cumsum(row_counts)))
    flat_d2 = cd2[flat]
    take = (pos[:-1][:, None] + np.arange(k)[None, :]).ravel()
    out[:] = cand[flat][take].reshape(n, k)
    outd2[:] = flat_d2[take].reshape(n, k)

    if n > m:
        # the query may have missed ties at the boundary: the (k+1)-th
        # non-self candidate must sit strictly farther than the k-th
        # (every row keeps at least k+1 candidates here since m = k+2)
        kth = outd2[:, k - 1]
        nxt = flat_d2[pos[:-1] + k]
        unsafe = np.flatnonzero(nxt <= kth)
        for i in unsafe:
            r = np.sqrt(kth[i]) * (1.0 + 1e-9) + 1e-300
            ball = np.asarray(tree.query_ball_point(pts[i], r), dtype=np.int64)
            bd = pts[ball] - pts[i]
            bd2 = np.einsum("kd,kd->k", bd, bd)
            o = np.lexsort((ball, bd2))
            ball = ball[o]
            sel = ball[ball != i][:k]
            if sel.size < k:
                raise DataError(f"neighborhood of point {i} underfull")
            out[i] = sel
    return out


def barycenters(points, neighbors) -> np.ndarray:
    """Mean of each point's neighbor set, (n, 3)."""
    pts = np.asarray(points, dtype=np.float64)
    return pts[neighbors].mean(axis=1)


def delta_coordinates(points, neighbors) -> np.ndarray:
    """Differential coordinates: point minus its neighborhood barycenter."""
    pts = np.asarray(points, dtype=np.float64)
    return pts - barycenters(pts, neighbors)


def laplacian_csr(n: int, neighbors) -> csr_matrix:
    """Random-walk graph Laplacian I - D^-1 C as CSR.

    C is the directed adjacency of the kNN graph (C[i, j] = 1 iff j is a
    neighbor of i), so every row has out-degree k and D^-1 C has uniform
    weights 1/k. Applying the matrix to positions yields
    delta_coordinates exactly.
    """
    nbr = np.asarray(neighbors, dtype=np.int64)
    k = nbr.shape[1]
    rows = np.repeat(np.arange(n, dtype=np.int64), k + 1)
    cols = np.column_stack([np.arange(n, dtype=np.int64), nbr]).ravel()
    data = np.tile(np.concatenate(([1.0], np.full(k, -1.0 / k))), n)
    return csr_matrix((data, (rows, cols)), shape=(n, n))


def estimate_normals(points, neighbors) -> np.ndarray:
    """Unit normals from PCA over each point and its neighbors.

    The normal is the eigenvector of the neighborhood covariance with the
    smallest eigenvalue, flipped to point away from the global centroid
    (kept as computed when exactly tangent). A vanishing covariance falls
    back to +z.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    group = np.concatenate([pts[:, None, :], pts[neighbors]], axis=1)
    mean = group.mean(axis=1)
    x = group - mean[:, None, :]
    cov = np.einsum("nkd,nke->nde", x, x)
    trace = np.einsum("ndd->n", cov)
    degenerate = trace < 1e-24
    cov[degenerate] = np.eye(3)  # placeholder, overwritten below
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    centroid = pts.mean(axis=0)
    outward = np.einsum("nd,nd->n", normals, pts - centroid)
    normals[outward < 0.0] *= -1.0
    # eigh output is unit length already; renormalize to be safe
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    np.divide(normals, norms, out=normals, where=norms > 0)
    normals[degenerate] = (0.0, 0.0, 1.0)
    assert n == normals.shape[0]
    return normals
