"""Decoder-side dequantization and anchored least-squares geometry.

The decoded graph gives the random-walk Laplacian L; reconstruction
solves the stacked system [L; w*S] v = [delta_r; w*c] per coordinate,
where S selects the anchor rows and c holds their voxel coordinates.
The solve runs on the normal equations, either by sparse direct
factorization or by conjugate gradient with a Jacobi preconditioner.
"""

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, lsqr, splu

from .codec import AnchorSet, DecodedStream, QuantizedDeltas, sigma_hat
from .errors import DataError, NumericalError
from .geometry import laplacian_csr

_DIRECT_LIMIT = 50_000  # auto backend: factorize below, iterate above


def dequantize(quant: QuantizedDeltas, visible_mask) -> np.ndarray:
    """Scale quantized deltas back; non-visible rows stay zero."""
    mask = np.asarray(visible_mask, dtype=bool)
    out = np.zeros(quant.q.shape, dtype=np.float64)
    sig = sigma_hat(quant.scale_codes, quant.s_thresh)
    out[mask] = quant.q[mask] / sig[:, None]
    return out


@dataclass
class ReconstructionProblem:
    laplacian: sp.csr_matrix  # (n, n) random-walk normalized
    rhs_deltas: np.ndarray  # (n, 3)
    anchors: AnchorSet
    tol: float = 1e-8
    maxiter: int = 5000
    w_anchor: float = 1.0


def assemble_problem(dec: DecodedStream, tol: float = 1e-8,
                     maxiter: int = 5000) -> ReconstructionProblem:
    quant = QuantizedDeltas(
        q=dec.q, scale_codes=dec.scale_codes, s_thresh=dec.s_thresh
    )
    rhs = dequantize(quant, dec.visible_mask)
    if dec.k_n >= 1:
        lap = laplacian_csr(dec.n, dec.neighbors)
    else:
        lap = sp.identity(dec.n, format="csr")
    return ReconstructionProblem(
        laplacian=lap, rhs_deltas=rhs, anchors=dec.anchors,
        tol=tol, maxiter=maxiter,
    )


def anchor_weighting(problem: ReconstructionProblem,
                     w_anchor: float) -> ReconstructionProblem:
    if w_anchor <= 0:
        raise DataError(f"w_anchor must be positive, got {w_anchor}")
    return replace(problem, w_anchor=w_anchor)


@dataclass
class SolveReport:
    backend: str
    iterations: int  # max over the three coordinate columns
    residual: float  # max relative normal-equation residual
    converged: bool
    wall_time: float
    unanchored_components: int


def unanchored_sink_indices(problem: ReconstructionProblem) -> np.ndarray:
    """One representative node per anchor-free sink component.

    The harmonic space of a directed random-walk Laplacian is spanned by
    absorption into sink SCCs, so an anchor in every sink SCC guarantees
    full column rank of the stacked system; weak connectivity does not.
    Adding the returned nodes to the anchor set restores a unique
    solution. Empty when the system is already well posed.
    """
    adj = problem.laplacian.tocoo()
    off = adj.row != adj.col
    rows, cols = adj.row[off], adj.col[off]
    n = problem.laplacian.shape[0]
    graph = sp.coo_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(n, n)
    )
    n_comp, labels = connected_components(graph, directed=True,
                                          connection="strong")
    sink = np.ones(n_comp, dtype=bool)
    cross = labels[rows] != labels[cols]
    sink[labels[rows[cross]]] = False
    if sink.sum() == 1:
        # a single sink class absorbs every walk: harmonics are constant,
        # so any anchor suffices
        return np.empty(0, dtype=np.int64)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[labels[problem.anchors.indices]] = True
    bad = np.flatnonzero(sink & ~anchored)
    if bad.size == 0:
        return np.empty(0, dtype=np.int64)
    # lowest node index of each offending component
    first = np.full(n_comp, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n, dtype=np.int64))
    return np.sort(first[bad])


def _check_anchored(problem: ReconstructionProblem) -> int:
    return int(unanchored_sink_indices(problem).size)


def reconstruct(problem: ReconstructionProblem,
                backend: str = "auto") -> tuple[np.ndarray, SolveReport]:
    """Least-squares solution of the anchored Laplacian system.

    Returns (points, report); points come out in voxel units. Backends:
    "direct" (sparse LU of the normal equations), "cg" (Jacobi
    preconditioned conjugate gradient), "auto" (direct up to 50k points,
    cg beyond). Non-convergence warns and returns the best iterate.
    """
    lap = problem.laplacian.tocsr()
    n = lap.shape[0]
    rhs = np.asarray(problem.rhs_deltas, dtype=np.float64)
    if rhs.shape != (n, 3):
        raise DataError(f"rhs must be ({n}, 3), got {rhs.shape}")
    if not np.isfinite(rhs).all():
        raise DataError("rhs contains non-finite values")
    if problem.anchors.indices.shape[0] < 1:
        raise DataError("at least one anchor required")
    if backend not in ("auto", "direct", "cg"):
        raise DataError(f"unknown backend {backend!r}")
    if backend == "auto":
        backend = "direct" if n <= _DIRECT_LIMIT else "cg"

    unanchored = _check_anchored(problem)
    if unanchored:
        warnings.warn(
            f"{unanchored} sink graph component(s) carry no anchor; the "
            "system may be rank-deficient, solution is the least-norm one",
            RuntimeWarning,
        )
        backend = "lsqr"  # bidiagonalization keeps the min-norm property

    w = float(problem.w_anchor)
    idx = problem.anchors.indices
    # normal equations: (L^T L + w^2 diag(sel)) v = L^T rhs + w^2 sel*c
    lt = lap.T.tocsr()
    diag_add = np.zeros(n)
    diag_add[idx] = w * w
    m = ((lt @ lap) + sp.diags(diag_add)).tocsr()
    b = lt @ rhs
    b[idx] += (w * w) * problem.anchors.coords.astype(np.float64)

    bnorm = np.linalg.norm(b, axis=0)
    bnorm[bnorm == 0.0] = 1.0

    t0 = time.perf_counter()
    out = np.empty((n, 3))
    iterations = 0
    if backend == "direct":
        lu = splu(m.tocsc())
        out = lu.solve(b)
    elif backend == "lsqr":
        k_c = idx.shape[0]
        sel = sp.coo_matrix(
            (np.full(k_c, w), (np.arange(k_c), idx)), shape=(k_c, n)
        )
        stacked = sp.vstack([lap, sel]).tocsr()
        rhs_stacked = np.vstack(
            [rhs, w * problem.anchors.coords.astype(np.float64)]
        )
        for col in range(3):
            res = lsqr(
                stacked, rhs_stacked[:, col], atol=problem.tol,
                btol=problem.tol, iter_lim=problem.maxiter,
            )
            out[:, col] = res[0]
            iterations = max(iterations, int(res[2]))
    else:
        diag = m.diagonal()
        diag[diag <= 0] = 1.0
        precond = sp.diags(1.0 / diag)
        for col in range(3):
            counter = _IterCounter()
            x, info = cg(
                m, b[:, col], x0=np.zeros(n), rtol=problem.tol, atol=0.0,
                maxiter=problem.maxiter, M=precond, callback=counter,
            )
            out[:, col] = x
            iterations = max(iterations, counter.count)
    wall = time.perf_counter() - t0

    if not np.isfinite(out).all():
        raise NumericalError("solver produced non-finite coordinates")
    resid = np.linalg.norm(m @ out - b, axis=0) / bnorm
    residual = float(resid.max())
    converged = residual <= problem.tol
    if not converged and unanchored == 0:
        warnings.warn(
            f"solver stopped at relative residual {residual:.3e} "
            f"(target {problem.tol:.1e}); returning the best iterate",
            RuntimeWarning,
        )
    return out, SolveReport(
        backend=backend, iterations=iterations, residual=residual,
        converged=converged, wall_time=wall,
        unanchored_components=unanchored,
    )


class _IterCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, _xk):
        self.count += 1
