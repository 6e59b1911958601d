"""Attention kernels: dense reference and the blocked A-shape kernel.

Both kernels consume inputs already permuted into scan order and add a
decomposed 2D relative-positional bias.  The bias is factorized over a
w x w key grid (w^2 = S_k) as B[q, k] = bh[q, k // w] + bw[q, k % w],
indexed by *spatial* positions, so the permutations are carried along to
translate permuted row/column numbers back to spatial indices.

The dense reference materializes the full score matrix and is the oracle.
The A-shape kernel tiles queries and keys, visits only a static set of key
tiles per query tile (a dense prefix of ``floor(r * T_col)`` tiles plus
the diagonal tile), and maintains the streaming online-softmax state
(running max, denominator, output accumulator) so the visited columns are
normalized exactly once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Permutation
from .tensor import matmul


@dataclass(frozen=True)
class BiasTables:
    """Decomposed 2D relative-positional bias over a w x w key grid."""

    bh: np.ndarray  # [S_q, w]
    bw: np.ndarray  # [S_q, w]

    def __post_init__(self):
        bh = np.ascontiguousarray(np.asarray(self.bh, dtype=np.float32))
        bw = np.ascontiguousarray(np.asarray(self.bw, dtype=np.float32))
        if bh.ndim != 2 or bh.shape != bw.shape:
            raise ValueError(f"bias tables must share shape [S_q, w], got {bh.shape} / {bw.shape}")
        object.__setattr__(self, "bh", bh)
        object.__setattr__(self, "bw", bw)

    @property
    def w(self) -> int:
        return int(self.bh.shape[1])

    def dense(self, q_spatial: np.ndarray, k_spatial: np.ndarray) -> np.ndarray:
        """Materialized bias for given spatial query rows and key columns."""
        w = self.w
        k_spatial = np.asarray(k_spatial)
        if k_spatial.size and int(k_spatial.max()) >= w * w:
            raise ValueError(f"key index {int(k_spatial.max())} outside {w}x{w} grid")
        rows_h = self.bh[q_spatial]
        rows_w = self.bw[q_spatial]
        return rows_h[:, k_spatial // w] + rows_w[:, k_spatial % w]


@dataclass(frozen=True)
class AShapeConfig:
    """Static sparsity schedule: tile sizes, density ratio, softmax scale.

    ``tau`` of None means 1/sqrt(d), resolved when the kernel runs.
    """

    b_row: int = 32
    b_col: int = 32
    r: float = 1.0
    tau: float | None = None

    def __post_init__(self):
        if self.b_row < 1 or self.b_col < 1:
            raise ValueError("tile sizes must be >= 1")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"density ratio must be in [0, 1], got {self.r}")


@dataclass(frozen=True)
class ActiveSet:
    """Per query tile, the sorted key-tile indices it visits."""

    t_col: int
    tiles: tuple[tuple[int, ...], ...]

    def size(self) -> int:
        return sum(len(j) for j in self.tiles)


def build_active_set(t_row: int, t_col: int, r: float) -> ActiveSet:
    """Active key tiles J_i = {0, ..., floor(r * T_col) - 1} union {i}.

    The diagonal tile is deduplicated when it falls inside the prefix.  On
    rectangular tile grids with more query tiles than key tiles the
    diagonal of a trailing query tile does not exist; it clamps to the last
    key tile so no J_i is ever empty (every row attends somewhere).
    """
    if t_row < 1 or t_col < 1:
        raise ValueError("tile counts must be >= 1")
    prefix = range(math.floor(r * t_col))
    tiles = []
    for i in range(t_row):
        j = set(prefix)
        j.add(min(i, t_col - 1))
        tiles.append(tuple(sorted(j)))
    return ActiveSet(t_col, tuple(tiles))


def achieved_density(t_row: int, t_col: int, r: float) -> float:
    """Fraction of tile pairs actually computed at density ratio r."""
    active = build_active_set(t_row, t_col, r)
    return active.size() / (t_row * t_col)


def _resolve_tau(tau: float | None, d: int) -> np.float32:
    return np.float32(1.0 / math.sqrt(d)) if tau is None else np.float32(tau)


def _check_inputs(q, k, v, bias: BiasTables, sq_perm: Permutation, sk_perm: Permutation):
    q = np.ascontiguousarray(np.asarray(q, dtype=np.float32))
    k = np.ascontiguousarray(np.asarray(k, dtype=np.float32))
    v = np.ascontiguousarray(np.asarray(v, dtype=np.float32))
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("q, k, v must be 2-d")
    sq, d = q.shape
    sk = k.shape[0]
    if k.shape[1] != d:
        raise ValueError(f"k width {k.shape[1]} != q width {d}")
    if v.shape != (sk, d):
        raise ValueError(f"v shape {v.shape} != [{sk}, {d}]")
    if len(sq_perm) != sq or len(sk_perm) != sk:
        raise ValueError("permutation sizes must match S_q / S_k")
    if bias.bh.shape[0] != sq:
        raise ValueError(f"bias tables have {bias.bh.shape[0]} rows, expected {sq}")
    if bias.w * bias.w != sk:
        raise ValueError(f"bias grid {bias.w}^2 != S_k={sk}")
    return q, k, v


def dense_attention_ref(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    bias: BiasTables,
    sq_perm: Permutation,
    sk_perm: Permutation,
    tau: float | None = None,
) -> np.ndarray:
    """Full-matrix attention oracle: softmax(tau * Q K^T + B) V.

    Computes the explicit S_q x S_k score matrix with a numerically stable
    (max-subtracted) row softmax.
    """
    q, k, v = _check_inputs(q, k, v, bias, sq_perm, sk_perm)
    t = _resolve_tau(tau, q.shape[1])
    # bias rows added in two steps and normalization deferred past the value
    # matmul: the identical operation order as the blocked kernel, so a
    # single-tile blocked pass reproduces this result exactly
    q_spatial = sq_perm.forward
    k_spatial = sk_perm.forward
    logits = t * matmul(q, k.T)
    logits += bias.bh[q_spatial][:, k_spatial // bias.w]
    logits += bias.bw[q_spatial][:, k_spatial % bias.w]
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return matmul(p, v) / p.sum(axis=1, keepdims=True)


def ashape_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    bias: BiasTables,
    sq_perm: Permutation,
    sk_perm: Permutation,
    cfg: AShapeConfig,
) -> np.ndarray:
    """Blocked A-shape attention with a streaming online softmax.

    Per query tile i the active key tiles J_i are visited in ascending
    order; each visit rescales the running denominator and accumulator by
    alpha = exp(m - m') before folding in the tile's exp-weights.  tau is
    folded into the logits before the streaming update, which is the same
    arithmetic as scaling inside the exponent and stays defined at tau = 0.
    Columns past S_k in a ragged final key tile are excluded, which equals
    the -inf masking of the boundary columns (their exp-weight is zero).
    """
    q, k, v = _check_inputs(q, k, v, bias, sq_perm, sk_perm)
    sq, d = q.shape
    sk = k.shape[0]
    t = _resolve_tau(cfg.tau, d)
    t_row = -(-sq // cfg.b_row)
    t_col = -(-sk // cfg.b_col)
    active = build_active_set(t_row, t_col, cfg.r)

    k_spatial = sk_perm.forward
    k_row_idx = k_spatial // bias.w
    k_col_idx = k_spatial % bias.w

    out = np.empty((sq, d), dtype=np.float32)
    neg_inf = np.float32(-np.inf)
    for i in range(t_row):
        r0, r1 = i * cfg.b_row, min((i + 1) * cfg.b_row, sq)
        qi = q[r0:r1]
        q_spatial = sq_perm.forward[r0:r1]
        bh_i = bias.bh[q_spatial]
        bw_i = bias.bw[q_spatial]
        m = np.full(r1 - r0, neg_inf, dtype=np.float32)
        ell = np.zeros(r1 - r0, dtype=np.float32)
        acc = np.zeros((r1 - r0, d), dtype=np.float32)
        for j in active.tiles[i]:
            c0, c1 = j * cfg.b_col, min((j + 1) * cfg.b_col, sk)
            logits = t * matmul(qi, k[c0:c1].T)
            logits += bh_i[:, k_row_idx[c0:c1]]
            logits += bw_i[:, k_col_idx[c0:c1]]
            m_new = np.maximum(m, logits.max(axis=1))
            p = np.exp(logits - m_new[:, None])
            alpha = np.exp(m - m_new)  # exp(-inf) == 0 on the first tile
            ell = alpha * ell + p.sum(axis=1)
            acc = alpha[:, None] * acc + matmul(p, v[c0:c1])
            m = m_new
        out[r0:r1] = acc / ell[:, None]
    return out
