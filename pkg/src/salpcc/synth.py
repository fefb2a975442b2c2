"""Deterministic synthetic clouds used by tests, benchmarks and examples."""

import numpy as np


def plane_grid(rows: int = 40, cols: int = 50, spacing: float = 1.0) -> np.ndarray:
    """Flat rectangular grid in the z = 0 plane (rows*cols points)."""
    u, v = np.meshgrid(
        np.arange(cols, dtype=np.float64) * spacing,
        np.arange(rows, dtype=np.float64) * spacing,
    )
    return np.stack([u.ravel(), v.ravel(), np.zeros(u.size)], axis=1)


def fibonacci_sphere(n: int = 5000, radius: float = 1.0,
                     center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Near-uniform sphere sampling via the golden-angle spiral."""
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0))
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - y * y)
    pts = radius * np.stack(
        [r * np.cos(phi * i), y, r * np.sin(phi * i)], axis=1
    )
    return pts + np.asarray(center, dtype=np.float64)


def cube_faces(side_samples: int = 30, size: float = 1.0,
               center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Regular grid on all six faces of a cube, shared edges deduped.

    side_samples = 30 gives 5048 points.
    """
    g = np.linspace(0.0, size, side_samples)
    u, v = np.meshgrid(g, g)
    u = u.ravel()
    v = v.ravel()
    zeros = np.zeros_like(u)
    highs = np.full_like(u, size)
    faces = [
        np.stack([u, v, zeros], axis=1), np.stack([u, v, highs], axis=1),
        np.stack([u, zeros, v], axis=1), np.stack([u, highs, v], axis=1),
        np.stack([zeros, u, v], axis=1), np.stack([highs, u, v], axis=1),
    ]
    pts = np.unique(np.concatenate(faces, axis=0), axis=0)
    return pts - size / 2.0 + np.asarray(center, dtype=np.float64)


def noisy_torus(n: int = 10000, seed: int = 0, major: float = 2.0,
                minor: float = 0.7, noise: float = 0.003) -> np.ndarray:
    """Regular u-v lattice on a torus plus Gaussian jitter.

    Lattice sampling keeps neighborhoods uniform; the jitter models
    sub-voxel scan noise rather than resampling.
    """
    nu = int(np.ceil(np.sqrt(25.0 * n / 16.0)))
    nv = int(np.ceil(n / nu))
    u = np.linspace(0.0, 2.0 * np.pi, nu, endpoint=False)
    v = np.linspace(0.0, 2.0 * np.pi, nv, endpoint=False)
    uu, vv = np.meshgrid(u, v)
    uu = uu.ravel()[:n]
    vv = vv.ravel()[:n]
    ring = major + minor * np.cos(vv)
    pts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), minor * np.sin(vv)], axis=1
    )
    rng = np.random.default_rng(seed)
    return pts + rng.normal(scale=noise, size=(n, 3))


def two_object_scene(n: int = 20000, seed: int = 0) -> np.ndarray:
    """A sphere next to a cube, cube pushed back for partial occlusion."""
    n_sphere = n // 2
    sphere = fibonacci_sphere(n_sphere, radius=1.0)
    rng = np.random.default_rng(seed)
    n_cube = n - n_sphere
    face = rng.integers(0, 6, n_cube)
    uv = rng.uniform(0.0, 1.6, (n_cube, 2))
    cube = np.empty((n_cube, 3))
    axis = face // 2
    lo_hi = (face % 2).astype(np.float64) * 1.6
    others = np.array([[1, 2], [0, 2], [0, 1]])
    cube[np.arange(n_cube), axis] = lo_hi
    cube[np.arange(n_cube), others[axis, 0]] = uv[:, 0]
    cube[np.arange(n_cube), others[axis, 1]] = uv[:, 1]
    cube += np.array([0.7, -0.8, -2.6])  # behind and beside the sphere
    return np.concatenate([sphere, cube], axis=0)


def noisy_blob(n: int = 100000, seed: int = 0, radius: float = 100.0,
               noise: float = 0.02) -> np.ndarray:
    """Large bumpy sphere, the throughput fixture."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * (1.0 + rng.normal(scale=noise, size=n))
    return d * r[:, None]
