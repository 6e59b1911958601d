"""Spatial token indexing: 2D grids, Morton (Z-order) codes, permutations.

Tokens on an H x W grid are numbered row-major: token ``y * W + x``.
Morton codes interleave coordinate bits (x in the even bits, y in the odd
bits -- the convention is fixed here and everything downstream depends only
on the resulting 2x2-block grouping).  A :class:`Permutation` is a
validated bijection over token indices together with its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import tensor_read, tensor_write


@dataclass(frozen=True)
class GridShape:
    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ValueError(f"grid extents must be >= 1, got {self.h}x{self.w}")

    def n(self) -> int:
        return self.h * self.w


@dataclass(frozen=True)
class Permutation:
    """Bijection over token indices [0, N).

    ``forward[i]`` is the token index placed at rank ``i``; ``inverse`` is
    the position of each token, so ``inverse[forward[i]] == i``.
    Bijectivity is validated on construction.
    """

    forward: np.ndarray
    inverse: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        fwd = np.ascontiguousarray(np.asarray(self.forward, dtype=np.int64))
        n = fwd.shape[0]
        if fwd.ndim != 1:
            raise ValueError("forward must be 1-d")
        seen = np.zeros(n, dtype=bool)
        if fwd.size and (fwd.min() < 0 or fwd.max() >= n):
            raise ValueError("forward entries must lie in [0, N)")
        seen[fwd] = True
        if not seen.all():
            raise ValueError("forward is not a bijection on [0, N)")
        inv = np.empty(n, dtype=np.int64)
        inv[fwd] = np.arange(n, dtype=np.int64)
        if self.inverse is not None:
            given = np.asarray(self.inverse, dtype=np.int64)
            if not np.array_equal(given, inv):
                raise ValueError("inverse does not match forward")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)

    def __len__(self) -> int:
        return int(self.forward.shape[0])

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n, dtype=np.int64))


def morton_encode(x: int, y: int) -> int:
    """Interleave coordinate bits: bit b of x -> bit 2b, bit b of y -> bit 2b+1."""
    if x < 0 or y < 0 or x >= 2**31 or y >= 2**31:
        raise ValueError("coordinates must be in [0, 2^31)")
    return int(_spread_bits(np.uint64(x)) | (_spread_bits(np.uint64(y)) << np.uint64(1)))


def _spread_bits(v: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """Spread the low 32 bits of v so bit b lands at bit 2b."""
    u = np.uint64
    v = v & u(0xFFFFFFFF)
    v = (v | (v << u(16))) & u(0x0000FFFF0000FFFF)
    v = (v | (v << u(8))) & u(0x00FF00FF00FF00FF)
    v = (v | (v << u(4))) & u(0x0F0F0F0F0F0F0F0F)
    v = (v | (v << u(2))) & u(0x3333333333333333)
    v = (v | (v << u(1))) & u(0x5555555555555555)
    return v


def morton_codes(shape: GridShape) -> np.ndarray:
    """Morton code of every row-major token on the grid."""
    ys, xs = np.divmod(np.arange(shape.n(), dtype=np.uint64), np.uint64(shape.w))
    return _spread_bits(xs) | (_spread_bits(ys) << np.uint64(1))


def morton_order(shape: GridShape) -> Permutation:
    """Tokens sorted ascending by Morton code of their true coordinates.

    Codes are unique, so ordering is total; non-power-of-two and non-square
    grids need no padding.
    """
    codes = morton_codes(shape)
    return Permutation(np.argsort(codes, kind="stable").astype(np.int64))


def apply_permutation(p: Permutation, t: np.ndarray) -> np.ndarray:
    """Gather rows: out[i] = t[p.forward[i]]."""
    t = np.asarray(t)
    if t.shape[0] != len(p):
        raise ValueError(f"permutation over {len(p)} rows, tensor has {t.shape[0]}")
    return np.ascontiguousarray(t[p.forward])


def invert(p: Permutation) -> Permutation:
    return Permutation(p.inverse.copy(), p.forward.copy())


PERM_INDEX_LIMIT = 1 << 24  # largest token index exactly representable in f32


def permutation_write(p: Permutation, path) -> None:
    """Serialize as a rank-1 SPTN tensor of exact-integer float32 indices."""
    if len(p) > PERM_INDEX_LIMIT:
        raise ValueError(f"permutation longer than {PERM_INDEX_LIMIT} not serializable")
    tensor_write(p.forward.astype(np.float32), path)


def permutation_read(path) -> Permutation:
    vals = tensor_read(path)
    if vals.ndim != 1:
        raise ValueError(f"{path}: permutation tensor must be rank 1")
    idx = vals.astype(np.int64)
    if not np.array_equal(idx.astype(np.float32), vals):
        raise ValueError(f"{path}: permutation entries must be exact integers")
    return Permutation(idx)
