"""Command-line interface: verification, benchmarking, and artifact emission.

Subcommands: saliency, permute, verify, attn-bench, encode, mlp-stats,
probe-cluster.  Every command is deterministic given its seed (printed on
each run); timing columns are the only values that vary between runs.
Tensors travel as SPTN files, images as P5 PGM, tables as CSV.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time

import numpy as np

from .attention import AShapeConfig, BiasTables, achieved_density, ashape_attention
from .encoder import (
    BENCH_COLUMNS,
    bench_csv,
    encoder_forward,
    init_weights,
    parse_config,
)
from .grid import GridShape, Permutation, morton_order, permutation_write
from .mlp import mlp_forward, pearson, token_dissimilarity, update_magnitudes, kmeans_replace
from .saliency import OrderingConfig, SaliencyMap, sobel_magnitude, importance_order, write_pgm
from .stripesort import StripeConfig, block_id_map, stripe_sort
from .tensor import Rng, SptnError, tensor_read, tensor_write


def _read_rank(path: str, rank: int, what: str) -> np.ndarray:
    t = tensor_read(path)
    if t.ndim != rank:
        raise ValueError(f"{path}: {what} must be rank {rank}, got rank {t.ndim}")
    return t


def _write_csv(path: str | None, text: str) -> None:
    print(text, end="")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _cmd_saliency(args) -> int:
    x = _read_rank(args.infile, 3, "input image")
    sal = sobel_magnitude(x)
    tensor_write(sal.values, args.out)
    print(f"wrote {args.out} ({sal.shape.h}x{sal.shape.w})")
    if args.pgm:
        write_pgm(sal.values, args.pgm)
        print(f"wrote {args.pgm}")
    return 0


def _cmd_permute(args) -> int:
    values = _read_rank(args.infile, 2, "saliency map")
    shape = GridShape(values.shape[0], values.shape[1])
    sal = SaliencyMap(shape, values)
    ordering = OrderingConfig(granularity=args.granularity, group_size=args.group_size)
    pi = importance_order(sal, ordering)
    sigma = stripe_sort(pi, StripeConfig(g=args.g, variant=args.variant), morton=morton_order(shape))
    permutation_write(sigma, args.out)
    print(f"wrote {args.out} (N={len(sigma)}, g={args.g}, variant={args.variant})")
    if args.blocks:
        ids = block_id_map(sigma, args.g, shape.h, shape.w)
        write_pgm(ids.astype(np.float32), args.blocks)
        print(f"wrote {args.blocks}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import format_table, run_suites

    print(f"seed: {args.seed}")
    results = run_suites(seed=args.seed, cases=args.cases)
    print(format_table(results))
    failed = sum(1 for r in results if not r.ok)
    if failed:
        print(f"{failed} suite(s) failed")
        return 1
    print("all suites passed")
    return 0


def _cmd_attn_bench(args) -> int:
    print(f"seed: {args.seed}")
    w = math.isqrt(args.n)
    if w * w != args.n:
        raise ValueError(f"--n must be a perfect square for the 2D bias grid, got {args.n}")
    densities = _parse_floats(args.densities, "--densities")
    if not densities:
        raise ValueError("--densities must name at least one density")
    rng = Rng(args.seed)
    q = rng.normal((args.n, args.d))
    k = rng.normal((args.n, args.d))
    v = rng.normal((args.n, args.d))
    bias = BiasTables(rng.normal((args.n, w), std=0.5), rng.normal((args.n, w), std=0.5))
    ident = Permutation.identity(args.n)
    t_tiles = -(-args.n // args.tile)

    def run(r: float) -> float:
        cfg = AShapeConfig(b_row=args.tile, b_col=args.tile, r=r)
        times = []
        for _ in range(args.repeats):
            started = time.perf_counter()
            ashape_attention(q, k, v, bias, ident, ident, cfg)
            times.append((time.perf_counter() - started) * 1e3)
        return statistics.median(times)

    medians = {r: run(r) for r in dict.fromkeys(densities)}
    baseline = medians.get(1.0, None)
    if baseline is None:
        baseline = run(1.0)
    lines = [BENCH_COLUMNS]
    for r in densities:
        ach = achieved_density(t_tiles, t_tiles, r)
        lines.append(f"{float(r)!r},{ach!r},{medians[r]:.3f},{baseline / medians[r]:.4f}")
    _write_csv(args.csv, "\r\n".join(lines) + "\r\n")
    return 0


def _cmd_encode(args) -> int:
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    print(f"seed: {cfg.seed}")
    x = _read_rank(args.infile, 3, "input image")
    weights = init_weights(cfg)
    y, report = encoder_forward(x, weights, cfg, mode=args.mode)
    tensor_write(y, args.out)
    print(f"wrote {args.out} (mode={args.mode}, {report.total_ms():.1f} ms)")
    if args.report:
        with open(args.report, "w", newline="") as fh:
            fh.write(report.csv())
        print(f"wrote {args.report}")
    return 0


def _cmd_mlp_stats(args) -> int:
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    print(f"seed: {cfg.seed}")
    x = _read_rank(args.infile, 3, "input image")
    weights = init_weights(cfg)
    taps: dict[int, list] = {}

    def tap(bi, kind, tokens, sigma):
        taps.setdefault(bi, []).append((tokens, sigma))

    encoder_forward(x, weights, cfg, mode="sparse", tap=tap)
    lines = ["layer,K,rho,mean_u_keep,mean_u_bypass"]
    for bi in sorted(taps):
        u_all, dis_all, keep_all = [], [], []
        k_total = 0
        for tokens, sigma in taps[bi]:
            _, delta = mlp_forward(tokens, weights[bi].mlp)
            u = update_magnitudes(delta)
            dis = token_dissimilarity(tokens)
            n = tokens.shape[0]
            k = min(max(round(cfg.keep_fraction[bi] * n), 1), n)
            mask = np.zeros(n, dtype=bool)
            mask[sigma.forward[:k]] = True
            u_all.append(u)
            dis_all.append(dis)
            keep_all.append(mask)
            k_total += k
        u = np.concatenate(u_all)
        dis = np.concatenate(dis_all)
        keep = np.concatenate(keep_all)
        rho = pearson(dis, u)
        mean_keep = float(u[keep].mean())
        mean_bypass = float(u[~keep].mean()) if (~keep).any() else float("nan")
        lines.append(f"{bi},{k_total},{rho!r},{mean_keep!r},{mean_bypass!r}")
    _write_csv(args.csv, "\r\n".join(lines) + "\r\n")
    return 0


def _cmd_probe_cluster(args) -> int:
    print(f"seed: {args.seed}")
    x = _read_rank(args.infile, 2, "token matrix")
    ks = [int(v) for v in _parse_floats(args.k, "--k")]
    norm = float(np.linalg.norm(x.astype(np.float64)))
    lines = ["k,distortion,relative_perturbation"]
    for k in ks:
        replaced, distortion = kmeans_replace(x, k, seed=args.seed, iters=args.iters)
        rel = float(np.linalg.norm((replaced - x).astype(np.float64))) / norm if norm else 0.0
        lines.append(f"{k},{distortion!r},{rel!r}")
    _write_csv(args.csv, "\r\n".join(lines) + "\r\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zstripe",
        description="Structured sparsification toolkit: saliency-ordered block-sparse "
        "attention and token-routed MLPs over a toy windowed ViT encoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("saliency", help="gradient-magnitude saliency map of an image tensor")
    p.add_argument("--in", dest="infile", required=True, help="input image, SPTN rank 3 [H,W,D]")
    p.add_argument("--out", required=True, help="output saliency map, SPTN rank 2")
    p.add_argument("--pgm", help="optional preview image (P5 PGM)")
    p.set_defaults(func=_cmd_saliency)

    p = sub.add_parser("permute", help="stripe-sort scan order from a saliency map")
    p.add_argument("--in", dest="infile", required=True, help="saliency map, SPTN rank 2 [H,W]")
    p.add_argument("--g", type=int, default=4, help="stripe count (default 4)")
    p.add_argument(
        "--variant",
        choices=("full", "no_sort", "no_interleave"),
        default="full",
        help="ablation variant (default full)",
    )
    p.add_argument("--granularity", choices=("zgroup", "token"), default="zgroup")
    p.add_argument("--group-size", type=int, default=4, help="tokens per z-group (default 4)")
    p.add_argument("--out", required=True, help="output permutation, SPTN rank 1")
    p.add_argument("--blocks", help="optional sequence-block id image (P5 PGM)")
    p.set_defaults(func=_cmd_permute)

    p = sub.add_parser("verify", help="run the oracle-equivalence suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=50, help="instances per suite (default 50)")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("attn-bench", help="time the blocked kernel across densities")
    p.add_argument("--n", type=int, default=4096, help="sequence length, perfect square")
    p.add_argument("--d", type=int, default=64, help="head width (default 64)")
    p.add_argument("--densities", default="0.25,0.5,1.0", help="comma list of density ratios")
    p.add_argument("--repeats", type=int, default=20, help="timing repeats (default 20)")
    p.add_argument("--tile", type=int, default=128, help="tile side (default 128)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the table to this CSV file")
    p.set_defaults(func=_cmd_attn_bench)

    p = sub.add_parser("encode", help="run the toy encoder over an image tensor")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--in", dest="infile", required=True, help="input image, SPTN rank 3 [H,W,D]")
    p.add_argument("--mode", choices=("dense", "sparse"), default="sparse")
    p.add_argument("--out", required=True, help="output tensor, SPTN rank 3")
    p.add_argument("--report", help="optional per-block cost report CSV")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("mlp-stats", help="per-layer routing statistics CSV")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--in", dest="infile", required=True, help="input image, SPTN rank 3 [H,W,D]")
    p.add_argument("--csv", help="also write the table to this CSV file")
    p.set_defaults(func=_cmd_mlp_stats)

    p = sub.add_parser("probe-cluster", help="k-means centroid-replacement probe CSV")
    p.add_argument("--in", dest="infile", required=True, help="token matrix, SPTN rank 2 [N,d]")
    p.add_argument("--k", required=True, help="comma list of cluster counts")
    p.add_argument("--iters", type=int, default=25, help="Lloyd iterations (default 25)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the table to this CSV file")
    p.set_defaults(func=_cmd_probe_cluster)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, SptnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
