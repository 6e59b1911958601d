"""Acceptance gate: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the gate lines.
Every criterion is checked at its stated tolerance against an independent
oracle where one exists.
"""

import math
import time

import numpy as np

from zstripe import (
    AShapeConfig,
    BiasTables,
    EncoderConfig,
    GridShape,
    MlpWeights,
    OrderingConfig,
    Permutation,
    RouterConfig,
    SaliencyMap,
    StripeConfig,
    achieved_density,
    apply_permutation,
    ashape_attention,
    block_members,
    build_active_set,
    dense_attention_ref,
    encoder_forward,
    importance_order,
    init_weights,
    invert,
    kmeans_replace,
    mac_count,
    mlp_forward,
    morton_order,
    pearson,
    reset_mac_count,
    route_mlp,
    stripe_sort,
    token_dissimilarity,
    update_magnitudes,
)
from zstripe.cli import main as cli_main
from zstripe.encoder import BlockWeights

SEED = 733


def _gate(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _rand_perm(rng, n):
    return Permutation(rng.permutation(n).astype(np.int64))


def _instance(rng, sq, w, d):
    sk = w * w
    return (
        rng.standard_normal((sq, d)).astype(np.float32),
        rng.standard_normal((sk, d)).astype(np.float32),
        rng.standard_normal((sk, d)).astype(np.float32),
        BiasTables(
            (0.5 * rng.standard_normal((sq, w))).astype(np.float32),
            (0.5 * rng.standard_normal((sq, w))).astype(np.float32),
        ),
        _rand_perm(rng, sq),
        _rand_perm(rng, sk),
    )


def _rel_err(got, want):
    """Worst elementwise error relative to the output scale (floor 1e-2)."""
    return float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-2)))


def _masked_oracle(q, k, v, bias, sq_perm, sk_perm, cfg):
    sq, d = q.shape
    sk = k.shape[0]
    t = 1.0 / math.sqrt(d) if cfg.tau is None else float(cfg.tau)
    active = build_active_set(-(-sq // cfg.b_row), -(-sk // cfg.b_col), cfg.r)
    w = bias.w
    q64, k64, v64 = (a.astype(np.float64) for a in (q, k, v))
    out = np.zeros((sq, d))
    for i in range(sq):
        cols = [
            c
            for j in active.tiles[i // cfg.b_row]
            for c in range(j * cfg.b_col, min((j + 1) * cfg.b_col, sk))
        ]
        s = sq_perm.forward[i]
        logits = np.array(
            [
                t * float(q64[i] @ k64[c])
                + float(bias.bh[s, sk_perm.forward[c] // w])
                + float(bias.bw[s, sk_perm.forward[c] % w])
                for c in cols
            ]
        )
        e = np.exp(logits - logits.max())
        out[i] = (e[:, None] * v64[cols]).sum(axis=0) / e.sum()
    return out.astype(np.float32)


def test_kernel_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        sq = int(rng.integers(1, 257))
        w = int(rng.integers(2, 17))
        d = int(rng.integers(2, 65))
        q, k, v, bias, pq, pk = _instance(rng, sq, w, d)
        cfg = AShapeConfig(
            b_row=int(rng.integers(8, 97)), b_col=int(rng.integers(8, 97)), r=1.0
        )
        got = ashape_attention(q, k, v, bias, pq, pk, cfg)
        want = dense_attention_ref(q, k, v, bias, pq, pk)
        worst = max(worst, _rel_err(got, want))
    elapsed = time.perf_counter() - started
    _gate(
        "kernel-oracle equivalence",
        worst <= 1e-4 and elapsed < 60.0,
        f"50 instances at r=1, max rel err {worst:.2e} (limit 1e-4), {elapsed:.1f}s (limit 60s)",
    )


def test_masked_oracle_equivalence():
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    count = 0
    for r in (0.0, 0.25, 0.5):
        for _ in range(8):
            sq = int(rng.integers(4, 64))
            w = int(rng.integers(3, 7))
            q, k, v, bias, pq, pk = _instance(rng, sq, w, 8)
            cfg = AShapeConfig(b_row=4, b_col=4, r=r)
            got = ashape_attention(q, k, v, bias, pq, pk, cfg)
            want = _masked_oracle(q, k, v, bias, pq, pk, cfg)
            worst = max(worst, _rel_err(got, want))
            count += 1
    _gate(
        "masked-oracle equivalence",
        worst <= 1e-4 and count >= 20,
        f"{count} instances at r in {{0, 0.25, 0.5}}, max rel err {worst:.2e} (limit 1e-4)",
    )


def test_active_set_density_accounting():
    exact = achieved_density(8, 8, 0.25)
    ok = exact == 0.34375
    mismatches = 0
    rng = np.random.default_rng(SEED + 2)
    for _ in range(100):
        t_row = int(rng.integers(1, 24))
        t_col = int(rng.integers(1, 24))
        r = float(rng.uniform(0, 1))
        prefix = set(range(math.floor(r * t_col)))
        brute = sum(len(prefix | {min(i, t_col - 1)}) for i in range(t_row))
        if achieved_density(t_row, t_col, r) != brute / (t_row * t_col):
            mismatches += 1
    _gate(
        "active-set density accounting",
        ok and mismatches == 0,
        f"achieved_density(8,8,0.25) = {exact} (want 0.34375 exactly), "
        f"{mismatches}/100 brute-force mismatches",
    )


def test_permutation_laws():
    rng = np.random.default_rng(SEED + 3)
    failures = 0
    for _ in range(1000):
        n = 4 * int(rng.integers(1, 65))
        pi = _rand_perm(rng, n)
        sigma = stripe_sort(pi, StripeConfig(g=4))
        if sorted(sigma.forward.tolist()) != list(range(n)):
            failures += 1
            continue
        if not np.array_equal(sigma.forward, pi.forward.reshape(n // 4, 4).T.reshape(-1)):
            failures += 1
            continue
        t = rng.standard_normal((n, 3)).astype(np.float32)
        if not np.array_equal(apply_permutation(invert(sigma), apply_permutation(sigma, t)), t):
            failures += 1
    _gate(
        "permutation laws",
        failures == 0,
        f"1000 random configs: bijectivity, transpose oracle, apply/invert "
        f"round-trip bit-exact; {failures} failures",
    )


def test_phase_shift_property():
    bad = 0
    for side in (4, 8, 16):
        shape = GridShape(side, side)
        m = SaliencyMap(shape, np.ones((side, side), dtype=np.float32))
        pi = importance_order(m, OrderingConfig("zgroup", 4))
        sigma = stripe_sort(pi, StripeConfig(g=4))
        offsets = []
        for members in block_members(sigma, 4):
            ys, xs = np.divmod(members, side)
            block_offsets = set(zip((ys % 2).tolist(), (xs % 2).tolist()))
            if len(block_offsets) != 1:
                bad += 1
                continue
            offsets.append(block_offsets.pop())
            # half-resolution view: every aligned 2x2 cell exactly once
            if len(set(zip((ys // 2).tolist(), (xs // 2).tolist()))) != side * side // 4:
                bad += 1
        if sorted(offsets) != [(0, 0), (0, 1), (1, 0), (1, 1)]:
            bad += 1
    _gate(
        "phase-shift property",
        bad == 0,
        "uniform saliency, H=W in {4,8,16}, G=4: each block is one fixed "
        f"phase offset of the 2x subsampled grid, verified exhaustively; {bad} violations",
    )


def _mlp_weights(rng, d, h):
    return MlpWeights(
        w1=(rng.standard_normal((d, h)) / np.sqrt(d)).astype(np.float32),
        b1=rng.standard_normal(h).astype(np.float32),
        w2=(rng.standard_normal((h, d)) / np.sqrt(h)).astype(np.float32),
        b2=rng.standard_normal(d).astype(np.float32),
        ln_gamma=np.ones(d, np.float32),
        ln_beta=np.zeros(d, np.float32),
    )


def test_routed_mlp_exactness():
    rng = np.random.default_rng(SEED + 4)
    bit_mismatch = 0
    mac_mismatch = 0
    for _ in range(30):
        n = int(rng.integers(2, 33))
        d = int(rng.integers(2, 17))
        w = _mlp_weights(rng, d, 2 * d)
        x = rng.standard_normal((n, d)).astype(np.float32)
        sigma = _rand_perm(rng, n)
        cfg = RouterConfig(keep_fraction=float(rng.uniform(0.05, 1.0)))
        kk = cfg.keep_count(n)

        reset_mac_count()
        dense, _ = mlp_forward(x, w)
        dense_macs = mac_count()
        reset_mac_count()
        routed = route_mlp(x, w, sigma, cfg)
        routed_macs = mac_count()

        keep = sigma.forward[:kk]
        skip = sigma.forward[kk:]
        if not (np.array_equal(routed[keep], dense[keep]) and np.array_equal(routed[skip], x[skip])):
            bit_mismatch += 1
        if routed_macs * n != dense_macs * kk:
            mac_mismatch += 1
        if kk == n and not np.array_equal(routed, dense):
            bit_mismatch += 1
    full = route_mlp(x, w, sigma, RouterConfig(1.0))
    if not np.array_equal(full, mlp_forward(x, w)[0]):
        bit_mismatch += 1
    _gate(
        "routed-MLP exactness",
        bit_mismatch == 0 and mac_mismatch == 0,
        f"30 instances: kept rows bit-equal to dense, keep=1 bit-equal, matmul "
        f"count exactly K/N of dense; {bit_mismatch} value / {mac_mismatch} count mismatches",
    )


def test_end_to_end_twin_equivalence():
    cfg = EncoderConfig(
        grid=GridShape(16, 16),
        d=16,
        heads=4,
        window=8,
        layout=("local", "local", "global"),
        r=1.0,
        keep_fraction=1.0,
        b_local=32,
        b_global=64,
        seed=17,
    )
    weights = init_weights(cfg)
    rng = np.random.default_rng(SEED + 5)
    x = rng.standard_normal((16, 16, 16)).astype(np.float32)
    sparse, _ = encoder_forward(x, weights, cfg, mode="sparse")
    dense, _ = encoder_forward(x, weights, cfg, mode="dense")
    err = _rel_err(sparse, dense)

    # token identity: with zero weights every block is a no-op, so any slot
    # shuffle in the permute/window plumbing would corrupt the output
    zero = tuple(
        _zero_block(cfg.d, 64 if kind == "local" else 256, 8 if kind == "local" else 16, cfg.heads)
        for kind in cfg.layout
    )
    ident, _ = encoder_forward(x, zero, cfg, mode="sparse")
    identity_ok = np.array_equal(ident, x)
    _gate(
        "end-to-end twin equivalence",
        err <= 1e-4 and identity_ok,
        f"16x16 grid, 3 blocks: sparse(r=1, keep=1) vs dense max rel err {err:.2e} "
        f"(limit 1e-4); spatial order preserved: {identity_ok}",
    )


def _zero_block(d, s_attn, w_side, heads):
    zb = tuple(
        BiasTables(np.zeros((s_attn, w_side), np.float32), np.zeros((s_attn, w_side), np.float32))
        for _ in range(heads)
    )
    return BlockWeights(
        ln_gamma=np.ones(d, np.float32),
        ln_beta=np.zeros(d, np.float32),
        qkv_w=np.zeros((d, 3 * d), np.float32),
        qkv_b=np.zeros(3 * d, np.float32),
        proj_w=np.zeros((d, d), np.float32),
        proj_b=np.zeros(d, np.float32),
        bias=zb,
        mlp=MlpWeights(
            w1=np.zeros((d, 4 * d), np.float32),
            b1=np.zeros(4 * d, np.float32),
            w2=np.zeros((4 * d, d), np.float32),
            b2=np.zeros(d, np.float32),
            ln_gamma=np.ones(d, np.float32),
            ln_beta=np.zeros(d, np.float32),
        ),
    )


def test_softmax_shift_and_row_stochastic():
    rng = np.random.default_rng(SEED + 6)
    worst_shift = 0.0
    worst_rows = 0.0
    for _ in range(10):
        sq = int(rng.integers(4, 32))
        w = int(rng.integers(2, 5))
        q, k, v, bias, pq, pk = _instance(rng, sq, w, 8)
        cfg = AShapeConfig(b_row=4, b_col=4, r=0.5)
        base = ashape_attention(q, k, v, bias, pq, pk, cfg)
        shifted_bias = BiasTables(bias.bh + np.float32(2.75), bias.bw - np.float32(0.5))
        shifted = ashape_attention(q, k, v, bias=shifted_bias, sq_perm=pq, sk_perm=pk, cfg=cfg)
        worst_shift = max(worst_shift, float(np.max(np.abs(base - shifted))))

        # with V = I each output row is that query's attention-weight vector
        sk = w * w
        q2 = rng.standard_normal((sk, sk)).astype(np.float32)
        k2 = rng.standard_normal((sk, sk)).astype(np.float32)
        bias2 = BiasTables(
            (0.5 * rng.standard_normal((sk, w))).astype(np.float32),
            (0.5 * rng.standard_normal((sk, w))).astype(np.float32),
        )
        probe = ashape_attention(
            q2, k2, np.eye(sk, dtype=np.float32), bias2, _rand_perm(rng, sk), _rand_perm(rng, sk), cfg
        )
        worst_rows = max(worst_rows, float(np.max(np.abs(probe.sum(axis=1) - 1.0))))
        if probe.min() < 0:
            worst_rows = max(worst_rows, 1.0)
    ok = worst_shift <= 1e-5 and worst_rows <= 1e-5
    _gate(
        "softmax shift invariance and row-stochasticity",
        ok,
        f"bias shift deviation {worst_shift:.2e}, row-sum deviation {worst_rows:.2e} (limit 1e-5)",
    )


def test_desk_scale_performance(tmp_path):
    csv = tmp_path / "bench.csv"
    rc = cli_main(
        [
            "attn-bench",
            "--n",
            "4096",
            "--d",
            "64",
            "--tile",
            "128",
            "--repeats",
            "3",
            "--densities",
            "0.25,0.5,1.0",
            "--csv",
            str(csv),
        ]
    )
    rows = [line.split(",") for line in csv.read_bytes().decode().strip().split("\r\n")[1:]]
    ms = {float(r[0]): float(r[2]) for r in rows}
    speedup = {float(r[0]): float(r[3]) for r in rows}
    monotone = ms[0.25] < ms[0.5] < ms[1.0]
    _gate(
        "desk-scale performance analogue",
        rc == 0 and monotone and speedup[0.25] >= 1.3,
        f"N=4096 d=64: median ms {ms[0.25]:.0f} < {ms[0.5]:.0f} < {ms[1.0]:.0f} "
        f"(strictly monotone: {monotone}), speedup(r=0.25) = {speedup[0.25]:.2f}x (need >= 1.3x)",
    )


def test_update_dissimilarity_sign_check():
    rng = np.random.default_rng(SEED + 7)
    d = 16
    w = MlpWeights(
        w1=(rng.standard_normal((d, 4 * d)) / np.sqrt(d)).astype(np.float32),
        b1=np.zeros(4 * d, np.float32),
        w2=(rng.standard_normal((4 * d, d)) / np.sqrt(4 * d)).astype(np.float32),
        b2=np.zeros(d, np.float32),
        ln_gamma=np.ones(d, np.float32),
        ln_beta=np.zeros(d, np.float32),
    )
    # planted structure: a redundant herd of identical tokens (layernorm
    # zeroes them, so their MLP update is exactly zero) plus a high-update
    # subset of random outliers
    herd = np.tile(np.full(d, 1.5, dtype=np.float32), (48, 1))
    outliers = rng.standard_normal((16, d)).astype(np.float32) * 2.0 + 1.5
    x = np.concatenate([herd, outliers])
    _, delta = mlp_forward(x, w)
    rho = pearson(token_dissimilarity(x), update_magnitudes(delta))
    _gate(
        "update/dissimilarity sign check",
        rho > 0.5,
        f"planted 16/64 high-update subset: pearson = {rho:.3f} (need > 0.5)",
    )


def test_kmeans_probe_sanity():
    rng = np.random.default_rng(SEED + 8)
    x = rng.standard_normal((48, 6)).astype(np.float32)
    curve = [kmeans_replace(x, 5, seed=11, iters=i)[1] for i in range(9)]
    monotone = all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))
    replaced, distortion = kmeans_replace(x, 48, seed=11)
    lossless = np.array_equal(replaced, x) and distortion == 0.0
    _gate(
        "k-means probe sanity",
        monotone and lossless,
        f"distortion non-increasing over iterations: {monotone} "
        f"({curve[0]:.4f} -> {curve[-1]:.4f}); k=N on distinct points: "
        f"distortion {distortion} and tokens returned unchanged: {lossless}",
    )
