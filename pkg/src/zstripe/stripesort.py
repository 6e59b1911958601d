"""Stripe interleaving: spread ranked tokens across G sequence blocks.

Viewing an importance order pi as a (N/G) x G matrix T (filled row-major),
the scan order is sigma = flatten(T^T): it visits every G-th element of pi
before moving to the next offset.  Each of the G contiguous blocks of
sigma then holds a uniformly subsampled mixture of ranks, which is what
turns a ranked order into spatially spread, phase-shifted half-resolution
views of the grid.

Ablation variants keep one half of the construction: ``no_interleave``
keeps the ranking but skips the transpose, ``no_sort`` interleaves the
plain Morton order instead of the ranked one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Permutation

VARIANTS = ("full", "no_interleave", "no_sort")


@dataclass(frozen=True)
class StripeConfig:
    g: int = 4
    variant: str = "full"

    def __post_init__(self):
        if self.g < 1:
            raise ValueError("group count must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def stripe_sort(
    pi: Permutation,
    cfg: StripeConfig,
    morton: Permutation | None = None,
) -> Permutation:
    """Final scan order sigma from the importance order pi.

    ``no_sort`` interleaves the Morton order instead of pi, so the caller
    must supply ``morton`` for that variant.
    """
    n = len(pi)
    if n % cfg.g != 0:
        raise ValueError(f"group count {cfg.g} must divide N={n}")
    if cfg.variant == "no_interleave":
        return Permutation(pi.forward.copy())
    if cfg.variant == "no_sort":
        if morton is None:
            raise ValueError("variant 'no_sort' needs the morton base order")
        if len(morton) != n:
            raise ValueError("morton permutation size mismatch")
        base = morton.forward
    else:
        base = pi.forward
    t = base.reshape(n // cfg.g, cfg.g)
    return Permutation(np.ascontiguousarray(t.T).reshape(-1))


def block_members(sigma: Permutation, g: int) -> list[np.ndarray]:
    """The G contiguous rank-blocks of sigma, as sorted token-index sets."""
    n = len(sigma)
    if g < 1 or n % g != 0:
        raise ValueError(f"group count {g} must divide N={n}")
    size = n // g
    return [np.sort(sigma.forward[b * size : (b + 1) * size]) for b in range(g)]


def block_id_map(sigma: Permutation, g: int, h: int, w: int) -> np.ndarray:
    """2-d map of which sigma-block each spatial token belongs to."""
    if h * w != len(sigma):
        raise ValueError("grid size does not match permutation")
    ids = np.empty(len(sigma), dtype=np.int64)
    for b, members in enumerate(block_members(sigma, g)):
        ids[members] = b
    return ids.reshape(h, w)
