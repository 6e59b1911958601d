"""Saliency-map and importance-ordering tests against scalar oracles."""

import numpy as np
import pytest

from zstripe import (
    GridShape,
    OrderingConfig,
    SaliencyMap,
    SOBEL_X,
    SOBEL_Y,
    group_energy,
    importance_order,
    morton_codes,
    morton_order,
    sobel_magnitude,
    write_pgm,
)

SEED = 20240819


def _sobel_ref(x: np.ndarray) -> np.ndarray:
    """Scalar-loop oracle with the same (channel, tap-row, tap-col) order."""
    h, w, d = x.shape
    padded = np.pad(x.astype(np.float32), ((1, 1), (1, 1), (0, 0)))
    mag = np.zeros((h, w), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            gx = np.float32(0.0)
            gy = np.float32(0.0)
            for c in range(d):
                for ky in range(3):
                    for kx in range(3):
                        v = padded[i + ky, j + kx, c]
                        gx += SOBEL_X[ky, kx] * v
                        gy += SOBEL_Y[ky, kx] * v
            mag[i, j] = np.sqrt(gx * gx + gy * gy)
    return mag


class TestSobelMagnitude:
    def test_constant_map_interior_zero(self):
        x = np.full((6, 6, 3), 2.5, dtype=np.float32)
        m = sobel_magnitude(x)
        assert np.array_equal(m.values[1:-1, 1:-1], np.zeros((4, 4), dtype=np.float32))

    def test_single_pixel_grid(self):
        # only the center taps touch the pixel, and both center taps are zero
        m = sobel_magnitude(np.full((1, 1, 2), 9.0, dtype=np.float32))
        assert m.values.shape == (1, 1)
        assert m.values[0, 0] == 0.0

    def test_vertical_step_matches_oracle(self):
        x = np.zeros((4, 4, 1), dtype=np.float32)
        x[:, 2:, 0] = 1.0
        got = sobel_magnitude(x).values
        assert np.array_equal(got, _sobel_ref(x))
        # the step between columns 1 and 2 lights up, the flat left side
        # stays dark, and zero padding makes the right border an edge too
        assert got[1, 1] > 0 and got[1, 2] > 0
        assert got[1, 0] == 0.0
        assert got[1, 3] == 4.0

    def test_random_maps_match_oracle_exactly(self):
        rng = np.random.default_rng(SEED)
        for _ in range(10):
            h = int(rng.integers(1, 7))
            w = int(rng.integers(1, 7))
            d = int(rng.integers(1, 4))
            x = rng.standard_normal((h, w, d)).astype(np.float32)
            got = sobel_magnitude(x).values
            assert np.array_equal(got, _sobel_ref(x))

    def test_translation_equivariance_in_interior(self):
        rng = np.random.default_rng(SEED + 1)
        patch = rng.standard_normal((3, 3, 2)).astype(np.float32)
        a = np.zeros((10, 10, 2), dtype=np.float32)
        b = np.zeros((10, 10, 2), dtype=np.float32)
        a[2:5, 2:5] = patch
        b[4:7, 5:8] = patch  # shifted by (+2, +3)
        ma = sobel_magnitude(a).values
        mb = sobel_magnitude(b).values
        assert np.array_equal(ma[1:6, 1:6], mb[3:8, 4:9])

    def test_nonnegative(self):
        rng = np.random.default_rng(SEED + 2)
        m = sobel_magnitude(rng.standard_normal((8, 8, 4)).astype(np.float32))
        assert np.all(m.values >= 0)

    def test_rank_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sobel_magnitude(np.zeros((4, 4), dtype=np.float32))


class TestSaliencyMap:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            SaliencyMap(GridShape(2, 2), np.zeros((2, 3), dtype=np.float32))

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            SaliencyMap(GridShape(1, 2), np.array([[1.0, -0.1]], dtype=np.float32))

    def test_flat_is_row_major(self):
        m = SaliencyMap(GridShape(2, 2), np.array([[1, 2], [3, 4]], dtype=np.float32))
        assert m.flat().tolist() == [1, 2, 3, 4]


class TestGroupEnergy:
    def test_uniform_map(self):
        shape = GridShape(4, 4)
        m = SaliencyMap(shape, np.ones((4, 4), dtype=np.float32))
        e = group_energy(m, morton_order(shape), 4)
        assert np.array_equal(e, np.full(4, 4.0, dtype=np.float32))

    def test_point_mass_lands_in_one_group(self):
        shape = GridShape(4, 4)
        vals = np.zeros((4, 4), dtype=np.float32)
        vals[3, 3] = 5.0  # morton rank 15, so the last group of four
        e = group_energy(SaliencyMap(shape, vals), morton_order(shape), 4)
        assert e.tolist() == [0.0, 0.0, 0.0, 5.0]

    def test_matches_bruteforce_sums(self):
        rng = np.random.default_rng(SEED + 3)
        shape = GridShape(8, 8)
        morton = morton_order(shape)
        vals = rng.uniform(0, 3, (8, 8)).astype(np.float32)
        m = SaliencyMap(shape, vals)
        got = group_energy(m, morton, 4)
        flat = m.flat()
        for g in range(16):
            acc = np.float32(0.0)
            for t in range(4):
                acc += flat[morton.forward[4 * g + t]]
            assert got[g] == acc

    def test_divisibility_enforced(self):
        shape = GridShape(3, 3)
        m = SaliencyMap(shape, np.ones((3, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            group_energy(m, morton_order(shape), 4)


class TestImportanceOrder:
    def test_uniform_zgroup_reduces_to_morton(self):
        for side in (4, 8):
            shape = GridShape(side, side)
            m = SaliencyMap(shape, np.ones((side, side), dtype=np.float32))
            pi = importance_order(m, OrderingConfig("zgroup", 4))
            assert np.array_equal(pi.forward, morton_order(shape).forward)

    def test_uniform_token_reduces_to_morton(self):
        shape = GridShape(4, 4)
        m = SaliencyMap(shape, np.full((4, 4), 2.0, dtype=np.float32))
        pi = importance_order(m, OrderingConfig("token", 1))
        assert np.array_equal(pi.forward, morton_order(shape).forward)

    def test_strictly_decreasing_map_token_order_is_identity(self):
        vals = np.arange(16, 0, -1, dtype=np.float32).reshape(4, 4)
        pi = importance_order(SaliencyMap(GridShape(4, 4), vals), OrderingConfig("token", 1))
        assert pi.forward.tolist() == list(range(16))

    def test_token_order_matches_sort_oracle(self):
        rng = np.random.default_rng(SEED + 4)
        for _ in range(50):
            h = int(rng.integers(1, 7))
            w = int(rng.integers(1, 7))
            vals = rng.choice([0.0, 1.0, 2.0], size=(h, w)).astype(np.float32)
            m = SaliencyMap(GridShape(h, w), vals)
            codes = morton_codes(GridShape(h, w))
            flat = m.flat()
            want = sorted(range(h * w), key=lambda i: (-flat[i], codes[i]))
            got = importance_order(m, OrderingConfig("token", 1)).forward.tolist()
            assert got == want

    def test_zgroup_keeps_groups_contiguous(self):
        rng = np.random.default_rng(SEED + 5)
        shape = GridShape(8, 8)
        morton = morton_order(shape)
        groups = [set(morton.forward[4 * g : 4 * g + 4].tolist()) for g in range(16)]
        for _ in range(25):
            vals = rng.uniform(0, 1, (8, 8)).astype(np.float32)
            pi = importance_order(SaliencyMap(shape, vals), OrderingConfig("zgroup", 4))
            for g in range(16):
                run = set(pi.forward[4 * g : 4 * g + 4].tolist())
                assert run in groups

    def test_zgroup_rank_matches_energy_sort(self):
        rng = np.random.default_rng(SEED + 6)
        shape = GridShape(8, 8)
        morton = morton_order(shape)
        vals = rng.uniform(0, 1, (8, 8)).astype(np.float32)
        m = SaliencyMap(shape, vals)
        pi = importance_order(m, OrderingConfig("zgroup", 4))
        energy = group_energy(m, morton, 4)
        want_rank = sorted(range(16), key=lambda g: (-energy[g], g))
        by_group = morton.forward.reshape(16, 4)
        want = np.concatenate([by_group[g] for g in want_rank])
        assert np.array_equal(pi.forward, want)

    def test_is_bijection(self):
        rng = np.random.default_rng(SEED + 7)
        for cfg in (OrderingConfig("token", 1), OrderingConfig("zgroup", 4)):
            vals = rng.uniform(0, 1, (8, 8)).astype(np.float32)
            pi = importance_order(SaliencyMap(GridShape(8, 8), vals), cfg)
            assert sorted(pi.forward.tolist()) == list(range(64))

    def test_scale_invariance(self):
        rng = np.random.default_rng(SEED + 8)
        vals = rng.uniform(0.5, 1.5, (8, 8)).astype(np.float32)
        for cfg in (OrderingConfig("token", 1), OrderingConfig("zgroup", 4)):
            a = importance_order(SaliencyMap(GridShape(8, 8), vals), cfg)
            b = importance_order(SaliencyMap(GridShape(8, 8), vals * 4.0), cfg)
            assert np.array_equal(a.forward, b.forward)

    def test_zgroup_divisibility_enforced(self):
        m = SaliencyMap(GridShape(3, 5), np.ones((3, 5), dtype=np.float32))
        with pytest.raises(ValueError):
            importance_order(m, OrderingConfig("zgroup", 4))


class TestWritePgm:
    def test_header_and_payload(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm(np.array([[0.0, 1.0], [2.0, 4.0]]), path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        body = raw[len(b"P5\n2 2\n255\n") :]
        assert list(body) == [0, 64, 128, 255]

    def test_constant_input_all_zero(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_pgm(np.full((3, 3), 7.0), path)
        assert path.read_bytes().endswith(bytes(9))

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(np.zeros(4), tmp_path / "x.pgm")
