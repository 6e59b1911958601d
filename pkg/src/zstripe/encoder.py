"""Toy ViT-style encoder with windowed-local and global attention blocks.

Each block runs pre-norm attention followed by a pre-norm MLP, both with
residual adds.  Attention operates in a stripe-sorted token order: a
saliency-driven permutation is computed once from the input (per window
for local blocks, over the whole grid for global blocks) and reused by
every block, both to reorder Q/K/V rows for the blocked sparse kernel and
to pick the MLP keep-set.  Outputs always come back in the original
row-major spatial order; the permute/inverse-permute round trip is exact.

``mode="dense"`` forces density 1.0 and keep fraction 1.0 through the very
same blocked primitives, so it is the reference twin: comparing it against
``mode="sparse"`` isolates exactly what sparsification changes.  A
CostReport records per-block attention tile pairs, routed MLP rows, and
wall time, and ``bench`` sweeps densities into a CSV table.
"""

from __future__ import annotations

import dataclasses
import io
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .attention import AShapeConfig, BiasTables, ashape_attention, build_active_set
from .grid import GridShape, Permutation, apply_permutation, invert, morton_order
from .mlp import MlpWeights, RouterConfig, route_mlp
from .saliency import OrderingConfig, importance_order, sobel_magnitude
from .stripesort import StripeConfig, stripe_sort
from .tensor import Rng, layernorm, matmul

BLOCK_KINDS = ("local", "global")


@dataclass(frozen=True)
class EncoderConfig:
    """Grid, width, block layout, and per-block sparsity settings.

    ``r`` and ``keep_fraction`` accept one value for all blocks or one per
    layout entry.  Global blocks need a square token grid (the decomposed
    bias spans a w x w key grid); local windows are always square.
    """

    grid: GridShape
    d: int = 64
    heads: int = 4
    window: int = 14
    layout: tuple[str, ...] = ("local", "local", "global")
    r: float | tuple[float, ...] = 0.25
    keep_fraction: float | tuple[float, ...] = 0.5
    stripe: StripeConfig = StripeConfig()
    ordering: OrderingConfig = OrderingConfig()
    bypass_mode: str = "identity"
    b_local: int = 32
    b_global: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.d % self.heads != 0:
            raise ValueError(f"width {self.d} must be a positive multiple of heads={self.heads}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.b_local < 1 or self.b_global < 1:
            raise ValueError("tile sizes must be >= 1")
        layout = tuple(self.layout)
        if not layout:
            raise ValueError("layout must name at least one block")
        for kind in layout:
            if kind not in BLOCK_KINDS:
                raise ValueError(f"unknown block kind {kind!r}, expected one of {BLOCK_KINDS}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "r", _per_block(self.r, len(layout), "r"))
        object.__setattr__(
            self, "keep_fraction", _per_block(self.keep_fraction, len(layout), "keep_fraction")
        )
        for v in self.r:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"density ratio must be in [0, 1], got {v}")
        for v in self.keep_fraction:
            if not 0.0 < v <= 1.0:
                raise ValueError(f"keep_fraction must be in (0, 1], got {v}")
        if self.bypass_mode not in ("identity", "layernorm"):
            raise ValueError(f"unknown bypass_mode {self.bypass_mode!r}")
        if "global" in layout:
            if self.grid.h != self.grid.w:
                raise ValueError("global blocks need a square token grid")
            if self.grid.n() % self.stripe.g != 0:
                raise ValueError(
                    f"stripe count {self.stripe.g} must divide N={self.grid.n()} for global blocks"
                )
        if "local" in layout and (self.window * self.window) % self.stripe.g != 0:
            raise ValueError(
                f"stripe count {self.stripe.g} must divide window^2={self.window * self.window}"
            )

    def tile(self, kind: str) -> int:
        return self.b_local if kind == "local" else self.b_global


def _per_block(value, n_blocks: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n_blocks
    values = tuple(float(v) for v in value)
    if len(values) != n_blocks:
        raise ValueError(f"{name} needs 1 or {n_blocks} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class BlockWeights:
    """Random-initialized stand-in weights for one encoder block."""

    ln_gamma: np.ndarray  # [d]
    ln_beta: np.ndarray  # [d]
    qkv_w: np.ndarray  # [d, 3d]
    qkv_b: np.ndarray  # [3d]
    proj_w: np.ndarray  # [d, d]
    proj_b: np.ndarray  # [d]
    bias: tuple[BiasTables, ...]  # one table pair per head
    mlp: MlpWeights

    def __post_init__(self):
        for name in ("ln_gamma", "ln_beta", "qkv_w", "qkv_b", "proj_w", "proj_b"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float32))
            object.__setattr__(self, name, arr)
        d = self.mlp.d
        if self.qkv_w.shape != (d, 3 * d) or self.qkv_b.shape != (3 * d,):
            raise ValueError(f"qkv projection must map [{d}] -> [{3 * d}]")
        if self.proj_w.shape != (d, d) or self.proj_b.shape != (d,):
            raise ValueError(f"output projection must map [{d}] -> [{d}]")
        if self.ln_gamma.shape != (d,) or self.ln_beta.shape != (d,):
            raise ValueError(f"ln_gamma/ln_beta must have shape [{d}]")
        if not self.bias:
            raise ValueError("need one BiasTables per head")
        object.__setattr__(self, "bias", tuple(self.bias))


@dataclass(frozen=True)
class BlockCost:
    """Work accounting for one block: attention tiles, MLP rows, time."""

    kind: str
    tile_pairs: int
    tile_pairs_total: int
    mlp_rows: int
    mlp_rows_total: int
    ms: float

    def __post_init__(self):
        if self.tile_pairs > self.tile_pairs_total or self.mlp_rows > self.mlp_rows_total:
            raise ValueError("processed work cannot exceed total work")

    @property
    def attn_density(self) -> float:
        return self.tile_pairs / self.tile_pairs_total

    @property
    def mlp_fraction(self) -> float:
        return self.mlp_rows / self.mlp_rows_total


COST_COLUMNS = (
    "block,kind,tile_pairs,tile_pairs_total,attn_density,"
    "mlp_rows,mlp_rows_total,mlp_fraction,ms"
)


@dataclass(frozen=True)
class CostReport:
    blocks: tuple[BlockCost, ...]

    def total_ms(self) -> float:
        return sum(b.ms for b in self.blocks)

    def attn_density(self) -> float:
        return sum(b.tile_pairs for b in self.blocks) / sum(b.tile_pairs_total for b in self.blocks)

    def csv(self) -> str:
        out = io.StringIO()
        out.write(COST_COLUMNS + "\r\n")
        for i, b in enumerate(self.blocks):
            out.write(
                f"{i},{b.kind},{b.tile_pairs},{b.tile_pairs_total},{b.attn_density!r},"
                f"{b.mlp_rows},{b.mlp_rows_total},{b.mlp_fraction!r},{b.ms:.3f}\r\n"
            )
        return out.getvalue()


def init_weights(cfg: EncoderConfig) -> tuple[BlockWeights, ...]:
    """Seeded random weights sized for every block in the layout."""
    rng = Rng(cfg.seed)
    d = cfg.d
    hidden = 4 * d
    blocks = []
    for kind in cfg.layout:
        if kind == "local":
            s_attn, w_side = cfg.window * cfg.window, cfg.window
        else:
            s_attn, w_side = cfg.grid.n(), cfg.grid.h
        qkv_w = rng.normal((d, 3 * d), std=0.5 / np.sqrt(d))
        proj_w = rng.normal((d, d), std=1.0 / np.sqrt(d))
        bias = tuple(
            BiasTables(rng.normal((s_attn, w_side), std=0.5), rng.normal((s_attn, w_side), std=0.5))
            for _ in range(cfg.heads)
        )
        mlp = MlpWeights(
            w1=rng.normal((d, hidden), std=1.0 / np.sqrt(d)),
            b1=np.zeros(hidden, dtype=np.float32),
            w2=rng.normal((hidden, d), std=1.0 / np.sqrt(hidden)),
            b2=np.zeros(d, dtype=np.float32),
            ln_gamma=np.ones(d, dtype=np.float32),
            ln_beta=np.zeros(d, dtype=np.float32),
        )
        blocks.append(
            BlockWeights(
                ln_gamma=np.ones(d, dtype=np.float32),
                ln_beta=np.zeros(d, dtype=np.float32),
                qkv_w=qkv_w,
                qkv_b=np.zeros(3 * d, dtype=np.float32),
                proj_w=proj_w,
                proj_b=np.zeros(d, dtype=np.float32),
                bias=bias,
                mlp=mlp,
            )
        )
    return tuple(blocks)


def _pad_grid(x: np.ndarray, window: int) -> np.ndarray:
    h, w = x.shape[:2]
    hp = -(-h // window) * window
    wp = -(-w // window) * window
    if (hp, wp) == (h, w):
        return x
    return np.pad(x, ((0, hp - h), (0, wp - w), (0, 0)))


def _split_windows(padded: np.ndarray, window: int) -> np.ndarray:
    """[Hp, Wp, D] -> [n_windows, window*window, D], windows row-major."""
    hp, wp, d = padded.shape
    nwy, nwx = hp // window, wp // window
    tiles = padded.reshape(nwy, window, nwx, window, d).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles).reshape(nwy * nwx, window * window, d)


def _merge_windows(wins: np.ndarray, hp: int, wp: int, window: int) -> np.ndarray:
    """Inverse of _split_windows."""
    d = wins.shape[2]
    nwy, nwx = hp // window, wp // window
    tiles = wins.reshape(nwy, nwx, window, window, d).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles).reshape(hp, wp, d)


def _orderings(x: np.ndarray, cfg: EncoderConfig) -> dict:
    """Saliency-driven stripe-sort permutations, computed once from the input."""
    out: dict = {}
    if "global" in cfg.layout:
        sal = sobel_magnitude(x)
        pi = importance_order(sal, cfg.ordering)
        out["global"] = stripe_sort(pi, cfg.stripe, morton=morton_order(cfg.grid))
    if "local" in cfg.layout:
        padded = _pad_grid(x, cfg.window)
        wins = _split_windows(padded, cfg.window)
        wshape = GridShape(cfg.window, cfg.window)
        wmorton = morton_order(wshape)
        sigmas = []
        for wi in range(wins.shape[0]):
            sal = sobel_magnitude(wins[wi].reshape(cfg.window, cfg.window, -1))
            pi = importance_order(sal, cfg.ordering)
            sigmas.append(stripe_sort(pi, cfg.stripe, morton=wmorton))
        out["local"] = sigmas
    return out


def _attend(
    tokens: np.ndarray,
    w: BlockWeights,
    sigma: Permutation,
    tile: int,
    r: float,
) -> np.ndarray:
    """Pre-norm multi-head attention over one token set, no residual."""
    d = w.mlp.d
    heads = len(w.bias)
    dh = d // heads
    h = layernorm(tokens, w.ln_gamma, w.ln_beta)
    qkv = matmul(h, w.qkv_w) + w.qkv_b
    q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
    sigma_inv = invert(sigma)
    cfg = AShapeConfig(b_row=tile, b_col=tile, r=r)
    outs = []
    for head in range(heads):
        sl = slice(head * dh, (head + 1) * dh)
        o_perm = ashape_attention(
            apply_permutation(sigma, q[:, sl]),
            apply_permutation(sigma, k[:, sl]),
            apply_permutation(sigma, v[:, sl]),
            w.bias[head],
            sigma,
            sigma,
            cfg,
        )
        outs.append(apply_permutation(sigma_inv, o_perm))
    return matmul(np.concatenate(outs, axis=1), w.proj_w) + w.proj_b


def encoder_forward(
    x: np.ndarray,
    weights: tuple[BlockWeights, ...],
    cfg: EncoderConfig,
    mode: str = "sparse",
    tap=None,
) -> tuple[np.ndarray, CostReport]:
    """Run every block over [H, W, D] input; returns output and CostReport.

    mode="dense" runs the identical pipeline with density and keep fraction
    pinned to 1.0, the reference twin for equivalence and speedup numbers.
    Output is in original row-major spatial order.  ``tap``, if given, is
    called as tap(block_index, kind, tokens, sigma) with each unit's
    post-attention tokens just before its MLP (per window for local
    blocks), for statistics probes.
    """
    if mode not in ("dense", "sparse"):
        raise ValueError(f"mode must be 'dense' or 'sparse', got {mode!r}")
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    if x.shape != (cfg.grid.h, cfg.grid.w, cfg.d):
        raise ValueError(f"input shape {x.shape} != ({cfg.grid.h}, {cfg.grid.w}, {cfg.d})")
    if len(weights) != len(cfg.layout):
        raise ValueError(f"{len(weights)} weight sets for {len(cfg.layout)} blocks")

    orderings = _orderings(x, cfg)
    state = x
    costs = []
    for bi, (kind, w) in enumerate(zip(cfg.layout, weights)):
        r = 1.0 if mode == "dense" else cfg.r[bi]
        keep = 1.0 if mode == "dense" else cfg.keep_fraction[bi]
        router = RouterConfig(keep_fraction=keep, bypass_mode=cfg.bypass_mode)
        tile = cfg.tile(kind)
        started = time.perf_counter()
        if kind == "global":
            sigma = orderings["global"]
            n = cfg.grid.n()
            tokens = state.reshape(n, cfg.d)
            tokens = tokens + _attend(tokens, w, sigma, tile, r)
            if tap is not None:
                tap(bi, kind, tokens, sigma)
            tokens = route_mlp(tokens, w.mlp, sigma, router)
            state = tokens.reshape(cfg.grid.h, cfg.grid.w, cfg.d)
            units = 1
            s_unit = n
            t_tiles = -(-n // tile)
        else:
            padded = _pad_grid(state, cfg.window)
            hp, wp = padded.shape[:2]
            wins = _split_windows(padded, cfg.window)
            sigmas = orderings["local"]
            processed = np.empty_like(wins)
            for wi in range(wins.shape[0]):
                tokens = wins[wi] + _attend(wins[wi], w, sigmas[wi], tile, r)
                if tap is not None:
                    tap(bi, kind, tokens, sigmas[wi])
                processed[wi] = route_mlp(tokens, w.mlp, sigmas[wi], router)
            state = _merge_windows(processed, hp, wp, cfg.window)[
                : cfg.grid.h, : cfg.grid.w
            ]
            units = wins.shape[0]
            s_unit = cfg.window * cfg.window
            t_tiles = -(-s_unit // tile)
        ms = (time.perf_counter() - started) * 1e3
        active = build_active_set(t_tiles, t_tiles, r)
        heads = len(w.bias)
        costs.append(
            BlockCost(
                kind=kind,
                tile_pairs=units * heads * active.size(),
                tile_pairs_total=units * heads * t_tiles * t_tiles,
                mlp_rows=units * router.keep_count(s_unit),
                mlp_rows_total=units * s_unit,
                ms=ms,
            )
        )
    return np.ascontiguousarray(state), CostReport(tuple(costs))


@dataclass(frozen=True)
class BenchRow:
    density: float
    achieved_density: float
    median_ms: float
    speedup: float


BENCH_COLUMNS = "density,achieved_density,median_ms,speedup"


def bench(
    cfg: EncoderConfig,
    densities: list[float],
    repeats: int = 3,
    x: np.ndarray | None = None,
) -> list[BenchRow]:
    """Median sparse-mode wall time per density against the dense twin.

    The input defaults to a seeded random image (seed + 1, distinct from
    the weight stream).  Speedup is dense-twin median time over sparse
    median time at each density.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if x is None:
        x = Rng(cfg.seed + 1).normal((cfg.grid.h, cfg.grid.w, cfg.d))
    weights = init_weights(cfg)
    dense_ms = statistics.median(
        encoder_forward(x, weights, cfg, mode="dense")[1].total_ms() for _ in range(repeats)
    )
    rows = []
    for density in densities:
        cfg_r = dataclasses.replace(cfg, r=float(density))
        times = []
        report = None
        for _ in range(repeats):
            _, report = encoder_forward(x, weights, cfg_r, mode="sparse")
            times.append(report.total_ms())
        med = statistics.median(times)
        rows.append(
            BenchRow(
                density=float(density),
                achieved_density=report.attn_density(),
                median_ms=med,
                speedup=dense_ms / med,
            )
        )
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    out = io.StringIO()
    out.write(BENCH_COLUMNS + "\r\n")
    for r in rows:
        out.write(f"{r.density!r},{r.achieved_density!r},{r.median_ms:.3f},{r.speedup:.4f}\r\n")
    return out.getvalue()


CONFIG_KEYS = (
    "grid_h",
    "grid_w",
    "d",
    "heads",
    "window",
    "layout",
    "r",
    "keep_fraction",
    "g",
    "variant",
    "granularity",
    "group_size",
    "bypass",
    "b_local",
    "b_global",
    "seed",
)


def parse_config(text: str) -> EncoderConfig:
    """Parse flat key=value lines ('#' comments allowed) into EncoderConfig."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"config line {lineno}: expected key=value, got {body!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for required in ("grid_h", "grid_w"):
        if required not in raw:
            raise ValueError(f"config is missing required key {required!r}")

    def geti(key: str, default: int) -> int:
        try:
            return int(raw[key]) if key in raw else default
        except ValueError:
            raise ValueError(f"config key {key!r}: expected integer, got {raw[key]!r}") from None

    def getflist(key: str, default):
        if key not in raw:
            return default
        try:
            values = tuple(float(part) for part in raw[key].split(","))
        except ValueError:
            raise ValueError(f"config key {key!r}: expected numbers, got {raw[key]!r}") from None
        return values[0] if len(values) == 1 else values

    layout = tuple(part.strip() for part in raw.get("layout", "local,local,global").split(","))
    return EncoderConfig(
        grid=GridShape(geti("grid_h", 0), geti("grid_w", 0)),
        d=geti("d", 64),
        heads=geti("heads", 4),
        window=geti("window", 14),
        layout=layout,
        r=getflist("r", 0.25),
        keep_fraction=getflist("keep_fraction", 0.5),
        stripe=StripeConfig(g=geti("g", 4), variant=raw.get("variant", "full")),
        ordering=OrderingConfig(
            granularity=raw.get("granularity", "zgroup"),
            group_size=geti("group_size", 4),
        ),
        bypass_mode=raw.get("bypass", "identity"),
        b_local=geti("b_local", 32),
        b_global=geti("b_global", 128),
        seed=geti("seed", 0),
    )
