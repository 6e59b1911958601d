"""Gradient-magnitude saliency and the descending-importance ordering.

The saliency map is the Sobel gradient magnitude of a feature map: each
channel is correlated with the two 3x3 Sobel kernels (zero padding at the
borders), the per-channel responses are summed over channels, and the two
summed responses are combined as sqrt(gx^2 + gy^2).  High values mark
edges and texture; smooth regions score near zero.

Importance ordering sorts tokens (or contiguous Morton Z-groups of tokens)
by descending saliency, with ties broken by ascending Morton code so a
uniform map degrades to pure Z-order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridShape, Permutation, morton_codes, morton_order

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float32)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float32)


@dataclass(frozen=True)
class SaliencyMap:
    shape: GridShape
    values: np.ndarray  # [H, W] float32, all >= 0

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if v.shape != (self.shape.h, self.shape.w):
            raise ValueError(f"values shape {v.shape} != grid {self.shape}")
        if not np.all(v >= 0):
            raise ValueError("saliency values must be nonnegative")
        object.__setattr__(self, "values", v)

    def flat(self) -> np.ndarray:
        """Row-major per-token view."""
        return self.values.reshape(-1)


@dataclass(frozen=True)
class OrderingConfig:
    """How tokens are ranked: individually or as Morton Z-groups.

    Ties always break by ascending Morton code (group index for zgroup
    granularity), so a constant map reproduces the Morton order exactly.
    """

    granularity: str = "zgroup"
    group_size: int = 4

    def __post_init__(self):
        if self.granularity not in ("token", "zgroup"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")


def sobel_magnitude(x: np.ndarray) -> SaliencyMap:
    """Sobel gradient-magnitude map of an [H, W, D] feature tensor.

    Accumulation order is fixed (channels ascending, kernel taps row-major)
    so the result is reproducible tap for tap.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"expected [H, W, D], got shape {x.shape}")
    h, w, d = x.shape
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    gx = np.zeros((h, w), dtype=np.float32)
    gy = np.zeros((h, w), dtype=np.float32)
    for c in range(d):
        for ky in range(3):
            for kx in range(3):
                window = padded[ky : ky + h, kx : kx + w, c]
                gx += SOBEL_X[ky, kx] * window
                gy += SOBEL_Y[ky, kx] * window
    mag = np.sqrt(gx * gx + gy * gy)
    return SaliencyMap(GridShape(h, w), mag)


def group_energy(m: SaliencyMap, morton: Permutation, group_size: int) -> np.ndarray:
    """Saliency summed over each contiguous run of Morton-ranked tokens."""
    n = m.shape.n()
    if len(morton) != n:
        raise ValueError("permutation size does not match grid")
    if group_size < 1 or n % group_size != 0:
        raise ValueError(f"group_size {group_size} must divide N={n}")
    vals = m.flat()[morton.forward].reshape(n // group_size, group_size)
    energy = np.zeros(n // group_size, dtype=np.float32)
    for t in range(group_size):  # fixed ascending order within the group
        energy += vals[:, t]
    return energy


def importance_order(m: SaliencyMap, cfg: OrderingConfig) -> Permutation:
    """Permutation ranking tokens by descending saliency.

    token granularity: sort token indices by (-saliency, morton code).
    zgroup granularity: rank Z-groups by (-group energy, group index) and
    emit each group as an intact Morton-contiguous run.
    """
    n = m.shape.n()
    codes = morton_codes(m.shape)
    if cfg.granularity == "token":
        order = np.lexsort((codes, -m.flat()))
        return Permutation(order.astype(np.int64))
    if n % cfg.group_size != 0:
        raise ValueError(f"group_size {cfg.group_size} must divide N={n}")
    morton = morton_order(m.shape)
    energy = group_energy(m, morton, cfg.group_size)
    g = len(energy)
    group_rank = np.lexsort((np.arange(g), -energy))
    by_group = morton.forward.reshape(g, cfg.group_size)
    return Permutation(by_group[group_rank].reshape(-1))


def write_pgm(values: np.ndarray, path) -> None:
    """Dump a 2-d array as binary P5 PGM, min-max normalized to 0..255."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"PGM needs a 2-d array, got shape {v.shape}")
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) * (255.0 / (hi - lo))
    gray = np.round(scaled).astype(np.uint8)
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())
