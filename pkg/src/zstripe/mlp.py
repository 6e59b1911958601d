"""Transformer MLP block, rank-prefix token routing, and analysis probes.

The router applies the MLP update only to tokens whose permutation rank
falls in the leading prefix (the high-saliency tokens under a stripe-sort
ordering); the rest bypass the block.  Kept rows reuse the dense code path
on a gathered subset, and every stage (layernorm, matmul, gelu) is
row-independent, so kept rows match the dense output bit for bit.

The probes quantify when bypassing is safe: per-token update magnitudes,
mean pairwise cosine dissimilarity, their Pearson correlation, and a
seeded k-means centroid-replacement probe that measures how much output
quality depends on token diversity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Permutation
from .tensor import Rng, gelu, layernorm, matmul


@dataclass(frozen=True)
class MlpWeights:
    """Weights for LN -> linear -> gelu -> linear with a residual add."""

    w1: np.ndarray  # [d, h]
    b1: np.ndarray  # [h]
    w2: np.ndarray  # [h, d]
    b2: np.ndarray  # [d]
    ln_gamma: np.ndarray  # [d]
    ln_beta: np.ndarray  # [d]

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "ln_gamma", "ln_beta"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float32))
            object.__setattr__(self, name, arr)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ValueError("w1 and w2 must be 2-d")
        d, h = self.w1.shape
        if d < 1 or h < 1:
            raise ValueError("weight extents must be >= 1")
        if self.w2.shape != (h, d):
            raise ValueError(f"w2 shape {self.w2.shape} != [{h}, {d}]")
        for name, extent in (("b1", h), ("b2", d), ("ln_gamma", d), ("ln_beta", d)):
            if getattr(self, name).shape != (extent,):
                raise ValueError(f"{name} must have shape [{extent}]")

    @property
    def d(self) -> int:
        return int(self.w1.shape[0])

    @property
    def h(self) -> int:
        return int(self.w1.shape[1])


@dataclass(frozen=True)
class RouterConfig:
    """Keep fraction and bypass behaviour for routed MLP execution."""

    keep_fraction: float = 1.0
    bypass_mode: str = "identity"  # or "layernorm"

    def __post_init__(self):
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.bypass_mode not in ("identity", "layernorm"):
            raise ValueError(f"unknown bypass_mode {self.bypass_mode!r}")

    def keep_count(self, n: int) -> int:
        """K = round(keep_fraction * N), clamped to [1, N]."""
        return min(max(round(self.keep_fraction * n), 1), n)


def mlp_forward(x: np.ndarray, w: MlpWeights) -> tuple[np.ndarray, np.ndarray]:
    """Dense MLP block: returns (x + delta, delta) with delta = MLP(LN(x))."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    if x.ndim != 2 or x.shape[1] != w.d:
        raise ValueError(f"x must be [N, {w.d}], got {x.shape}")
    hidden = gelu(matmul(layernorm(x, w.ln_gamma, w.ln_beta), w.w1) + w.b1)
    delta = matmul(hidden, w.w2) + w.b2
    return x + delta, delta


def route_mlp(
    x: np.ndarray,
    w: MlpWeights,
    sigma: Permutation,
    cfg: RouterConfig,
) -> np.ndarray:
    """Apply the MLP only to the K leading-rank tokens of ``sigma``.

    Kept rows are gathered, run through the dense code path, and scattered
    back, which leaves them bit-identical to a full dense pass.  Bypassed
    rows stay untouched (identity) or are layer-normalized.  Matmul work is
    exactly K/N of the dense block's.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    if x.ndim != 2 or x.shape[1] != w.d:
        raise ValueError(f"x must be [N, {w.d}], got {x.shape}")
    n = x.shape[0]
    if len(sigma) != n:
        raise ValueError(f"permutation sized {len(sigma)} != N={n}")
    keep = sigma.forward[: cfg.keep_count(n)]
    if cfg.bypass_mode == "identity":
        out = x.copy()
    else:
        out = layernorm(x, w.ln_gamma, w.ln_beta)
    kept_y, _ = mlp_forward(x[keep], w)
    out[keep] = kept_y
    return out


def update_magnitudes(delta: np.ndarray) -> np.ndarray:
    """Per-row L2 norm of the MLP update."""
    delta = np.asarray(delta, dtype=np.float32)
    if delta.ndim != 2:
        raise ValueError(f"delta must be [N, d], got {delta.shape}")
    d64 = delta.astype(np.float64)
    return np.sqrt(np.sum(d64 * d64, axis=1)).astype(np.float32)


def token_dissimilarity(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Mean cosine distance from each row to every other row, in [0, 2]."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need [N >= 2, d], got {x.shape}")
    n = x.shape[0]
    x64 = x.astype(np.float64)
    norms = np.sqrt(np.sum(x64 * x64, axis=1))
    unit = x64 / np.maximum(norms, eps)[:, None]
    cos = unit @ unit.T
    # sum_{j != i} (1 - cos_ij) = (n - 1) - (rowsum - cos_ii)
    d = ((n - 1) - (cos.sum(axis=1) - np.diag(cos))) / (n - 1)
    return np.clip(d, 0.0, 2.0).astype(np.float32)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("inputs must be equal-length vectors with N >= 2")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt(np.sum(ac * ac) * np.sum(bc * bc))
    if denom == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.sum(ac * bc) / denom)


def _assign(x64: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row (lowest index wins ties) and squared distances."""
    d2 = np.sum((x64[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(x64.shape[0]), labels]


def kmeans_replace(
    x: np.ndarray,
    k: int,
    seed: int,
    iters: int = 25,
) -> tuple[np.ndarray, float]:
    """Replace each row with its k-means centroid; returns (replaced, distortion).

    Deterministic careful seeding (first centroid uniform, the rest drawn
    proportionally to squared distance from the chosen set) followed by
    ``iters`` Lloyd iterations.  A cluster that loses all members is
    re-seeded from the point currently farthest from its assigned centroid,
    taking points in descending distance order when several clusters empty
    at once.  Distortion is the mean squared distance to the assigned
    centroid after the final assignment and never increases with ``iters``
    (barring re-seeds, which restart the descent from a better spread).
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise ValueError(f"x must be [N, d], got {x.shape}")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if iters < 0:
        raise ValueError("iters must be >= 0")
    x64 = x.astype(np.float64)
    rng = Rng(seed)

    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x64[rng.index(n)]
    d2 = np.sum((x64 - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        if d2.sum() > 0.0:
            pick = rng.choice_weighted(d2)
        else:  # all points coincide with a chosen centroid
            pick = rng.index(n)
        centroids[c] = x64[pick]
        d2 = np.minimum(d2, np.sum((x64 - centroids[c]) ** 2, axis=1))

    for _ in range(iters):
        labels, dist = _assign(x64, centroids)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x64)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            farthest = dist.copy()
            for c in np.flatnonzero(~nonempty):
                pick = int(np.argmax(farthest))
                centroids[c] = x64[pick]
                farthest[pick] = -1.0

    labels, dist = _assign(x64, centroids)
    replaced = centroids[labels].astype(np.float32)
    return replaced, float(dist.mean())
