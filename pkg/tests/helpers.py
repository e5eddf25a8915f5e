import numpy as np

from artseg.volume_io import BinaryMask, Volume


def random_blob_mask(rng, dims, spacing=(1.0, 1.0, 1.0)):
    """Union of 1-3 random ellipsoids; always non-empty."""
    grid = np.zeros(dims, dtype=bool)
    coords = np.stack(
        np.meshgrid(*[np.arange(n) for n in dims], indexing="ij"), axis=-1
    ).astype(float)
    for _ in range(rng.integers(1, 4)):
        center = np.array([rng.uniform(1.0, max(1.5, n - 2.0)) for n in dims])
        radii = np.array([rng.uniform(1.0, max(1.5, n / 3)) for n in dims])
        grid |= (((coords - center) / radii) ** 2).sum(axis=-1) <= 1.0
    if not grid.any():
        grid[tuple(d // 2 for d in dims)] = True
    return BinaryMask(grid.astype(np.uint8), spacing)


def random_noise_mask(rng, dims, p=0.1, spacing=(1.0, 1.0, 1.0)):
    grid = rng.random(dims) < p
    if not grid.any():
        grid[tuple(d // 2 for d in dims)] = True
    return BinaryMask(grid.astype(np.uint8), spacing)


def mask_from_points(dims, points, spacing=(1.0, 1.0, 1.0)):
    grid = np.zeros(dims, dtype=np.uint8)
    for p in points:
        grid[tuple(p)] = 1
    return BinaryMask(grid, spacing)


def ramp_volume(dims, spacing=(1.0, 1.0, 1.0), lo=0.0, hi=100.0):
    n = dims[0] * dims[1] * dims[2]
    flat = np.linspace(lo, hi, n, dtype=np.float32)
    return Volume(flat.reshape(dims, order="F"), spacing)
