"""Seeded oracle-equivalence suites behind the ``verify`` CLI command.

Each suite re-derives expected values from an independent formulation
(naive triple-loop matmul, explicit masked softmax, brute-force set
enumeration) and compares the library's fast paths against it.  All
randomness flows from one seed, so a failure reproduces exactly.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .attention import (
    AShapeConfig,
    BiasTables,
    ashape_attention,
    build_active_set,
    dense_attention_ref,
)
from .grid import GridShape, Permutation, apply_permutation, invert, morton_order
from .mlp import MlpWeights, RouterConfig, mlp_forward, route_mlp
from .saliency import OrderingConfig, SaliencyMap, importance_order
from .stripesort import StripeConfig, stripe_sort
from .tensor import Rng, mac_count, matmul, reset_mac_count, tensor_read, tensor_write


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    failures: int
    detail: str

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop f32 product, ascending-k accumulation per element."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = np.float32(0.0)
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def _random_permutation(rng: Rng, n: int) -> Permutation:
    keys = rng.raw(n)
    return Permutation(np.argsort(keys, kind="stable").astype(np.int64))


def _random_instance(rng: Rng, max_side: int = 256, max_d: int = 64):
    w = 2 + rng.index(int(math.isqrt(max_side)) - 1)  # key grid side in [2, sqrt(max)]
    sk = w * w
    sq = 1 + rng.index(max_side)
    d = 1 + rng.index(max_d)
    q = rng.normal((sq, d))
    k = rng.normal((sk, d))
    v = rng.normal((sk, d))
    bias = BiasTables(rng.normal((sq, w), std=0.5), rng.normal((sq, w), std=0.5))
    sq_perm = _random_permutation(rng, sq)
    sk_perm = _random_permutation(rng, sk)
    return q, k, v, bias, sq_perm, sk_perm


def _masked_dense_oracle(q, k, v, bias, sq_perm, sk_perm, cfg: AShapeConfig) -> np.ndarray:
    """Explicit softmax restricted to the active-tile columns of each row."""
    sq, d = q.shape
    sk = k.shape[0]
    tau = np.float32(cfg.tau if cfg.tau is not None else 1.0 / math.sqrt(d))
    active = build_active_set(-(-sq // cfg.b_row), -(-sk // cfg.b_col), cfg.r)
    logits = tau * (q.astype(np.float64) @ k.astype(np.float64).T)
    logits += bias.dense(sq_perm.forward, sk_perm.forward).astype(np.float64)
    mask = np.zeros((sq, sk), dtype=bool)
    for i in range(-(-sq // cfg.b_row)):
        cols = np.zeros(sk, dtype=bool)
        for j in active.tiles[i]:
            cols[j * cfg.b_col : min((j + 1) * cfg.b_col, sk)] = True
        mask[i * cfg.b_row : min((i + 1) * cfg.b_row, sq)] = cols
    logits[~mask] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return (p @ v.astype(np.float64)).astype(np.float32)


def _rel_ok(got: np.ndarray, want: np.ndarray, rtol: float, atol: float = 1e-6) -> tuple[bool, float]:
    diff = float(np.max(np.abs(got.astype(np.float64) - want.astype(np.float64)))) if got.size else 0.0
    return bool(np.allclose(got, want, rtol=rtol, atol=atol)), diff


def _suite_tensor_roundtrip(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed)
    failures = 0
    worst = ""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.sptn")
        for c in range(cases):
            rank = 1 + rng.index(4)
            shape = tuple(1 + rng.index(5) for _ in range(rank))
            t = rng.normal(shape)
            tensor_write(t, path)
            back = tensor_read(path)
            if back.shape != t.shape or not np.array_equal(back, t):
                failures += 1
                worst = f"case {c}: shape {shape} did not round-trip"
    return SuiteResult("tensor-roundtrip", cases, failures, worst or "bit-exact")


def _suite_matmul(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 1)
    failures = 0
    worst = ""
    for c in range(cases):
        m, k, n = (1 + rng.index(12) for _ in range(3))
        a = rng.normal((m, k))
        b = rng.normal((k, n))
        got = matmul(a, b)
        want = _naive_matmul(a, b)
        diff = float(np.max(np.abs(got - want))) if got.size else 0.0
        if diff != 0.0:
            failures += 1
            worst = f"case {c}: max abs diff {diff} vs triple loop"
    return SuiteResult("matmul-vs-triple-loop", cases, failures, worst or "max abs diff 0")


def _suite_permutations(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 2)
    failures = 0
    worst = ""
    for c in range(cases):
        g = 4
        n = g * (1 + rng.index(64))
        pi = _random_permutation(rng, n)
        sigma = stripe_sort(pi, StripeConfig(g=g))
        oracle = pi.forward.reshape(n // g, g).T.reshape(-1)
        rows = rng.normal((n, 3))
        round_trip = apply_permutation(invert(sigma), apply_permutation(sigma, rows))
        if not np.array_equal(sigma.forward, oracle):
            failures += 1
            worst = f"case {c}: stripe order != reshape-transpose-flatten oracle"
        elif not np.array_equal(round_trip, rows):
            failures += 1
            worst = f"case {c}: permute/inverse-permute round trip not exact"
    return SuiteResult("permutation-laws", cases, failures, worst or "bijective, exact round trips")


def _suite_kernel_vs_dense(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 3)
    failures = 0
    worst = ""
    for c in range(cases):
        q, k, v, bias, sq_perm, sk_perm = _random_instance(rng)
        cfg = AShapeConfig(b_row=1 + rng.index(64), b_col=1 + rng.index(64), r=1.0)
        got = ashape_attention(q, k, v, bias, sq_perm, sk_perm, cfg)
        want = dense_attention_ref(q, k, v, bias, sq_perm, sk_perm)
        ok, diff = _rel_ok(got, want, rtol=1e-4)
        if not ok:
            failures += 1
            worst = f"case {c}: max abs diff {diff:.3e} at r=1"
    return SuiteResult("kernel-vs-dense-oracle", cases, failures, worst or "within 1e-4 relative")


def _suite_masked_oracle(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 4)
    failures = 0
    worst = ""
    densities = (0.0, 0.25, 0.5)
    for c in range(cases):
        q, k, v, bias, sq_perm, sk_perm = _random_instance(rng, max_side=144, max_d=32)
        r = densities[c % len(densities)]
        cfg = AShapeConfig(b_row=1 + rng.index(32), b_col=1 + rng.index(32), r=r)
        got = ashape_attention(q, k, v, bias, sq_perm, sk_perm, cfg)
        want = _masked_dense_oracle(q, k, v, bias, sq_perm, sk_perm, cfg)
        ok, diff = _rel_ok(got, want, rtol=1e-4)
        if not ok:
            failures += 1
            worst = f"case {c}: max abs diff {diff:.3e} at r={r}"
    return SuiteResult("kernel-vs-masked-oracle", cases, failures, worst or "within 1e-4 relative")


def _suite_active_sets(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 5)
    failures = 0
    worst = ""
    for c in range(cases):
        t_row = 1 + rng.index(24)
        t_col = 1 + rng.index(24)
        r = float(rng.uniform(1)[0])
        active = build_active_set(t_row, t_col, r)
        for i in range(t_row):
            want = sorted(set(range(math.floor(r * t_col))) | {min(i, t_col - 1)})
            if list(active.tiles[i]) != want:
                failures += 1
                worst = f"case {c}: J_{i} mismatch at r={r:.4f}"
                break
    return SuiteResult("active-set-enumeration", cases, failures, worst or "matches set formula")


def _suite_routed_mlp(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 6)
    failures = 0
    worst = ""
    for c in range(cases):
        n = 2 + rng.index(31)
        d = 1 + rng.index(16)
        h = 1 + rng.index(32)
        w = MlpWeights(
            w1=rng.normal((d, h)),
            b1=rng.normal((h,)),
            w2=rng.normal((h, d)),
            b2=rng.normal((d,)),
            ln_gamma=rng.normal((d,)),
            ln_beta=rng.normal((d,)),
        )
        x = rng.normal((n, d))
        sigma = _random_permutation(rng, n)
        cfg = RouterConfig(keep_fraction=float(rng.uniform(1)[0]) * 0.9 + 0.1)
        kk = cfg.keep_count(n)
        reset_mac_count()
        dense_y, _ = mlp_forward(x, w)
        dense_macs = mac_count()
        reset_mac_count()
        routed = route_mlp(x, w, sigma, cfg)
        routed_macs = mac_count()
        keep = sigma.forward[:kk]
        bypass = np.setdiff1d(np.arange(n), keep)
        if not np.array_equal(routed[keep], dense_y[keep]):
            failures += 1
            worst = f"case {c}: keep rows not bit-equal to dense rows"
        elif not np.array_equal(routed[bypass], x[bypass]):
            failures += 1
            worst = f"case {c}: bypass rows modified"
        elif routed_macs * n != dense_macs * kk:
            failures += 1
            worst = f"case {c}: matmul work {routed_macs} != K/N of dense {dense_macs}"
    return SuiteResult("routed-mlp-exactness", cases, failures, worst or "bit-exact, K/N work")


def _suite_ordering(seed: int, cases: int) -> SuiteResult:
    rng = Rng(seed + 7)
    failures = 0
    worst = ""
    for c in range(cases):
        side = (2, 4, 8)[c % 3]
        shape = GridShape(side, side)
        sal = SaliencyMap(shape, rng.uniform((side, side)))
        pi = importance_order(sal, OrderingConfig(granularity="zgroup", group_size=4))
        morton = morton_order(shape)
        ranks = {int(tok): r for r, tok in enumerate(morton.forward)}
        groups = [sorted(ranks[int(t)] // 4 for t in pi.forward[i : i + 4]) for i in range(0, side * side, 4)]
        if any(len(set(g)) != 1 for g in groups):
            failures += 1
            worst = f"case {c}: a stripe group mixes Morton z-groups"
    return SuiteResult("zgroup-integrity", cases, failures, worst or "groups stay intact")


def run_suites(seed: int = 0, cases: int = 50) -> list[SuiteResult]:
    """Run every suite; ``cases`` scales the instance count per suite."""
    if cases < 1:
        raise ValueError("cases must be >= 1")
    small = max(1, cases // 2)
    return [
        _suite_tensor_roundtrip(seed, cases),
        _suite_matmul(seed, small),
        _suite_permutations(seed, cases),
        _suite_active_sets(seed, cases * 2),
        _suite_kernel_vs_dense(seed, cases),
        _suite_masked_oracle(seed, max(1, small)),
        _suite_routed_mlp(seed, cases),
        _suite_ordering(seed, cases),
    ]


def format_table(results: list[SuiteResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "pass" if r.ok else "FAIL"
        lines.append(f"{r.name:<{width}}  {status}  cases={r.cases}  {r.detail}")
    return "\n".join(lines)
