"""Dense float32 array primitives with deterministic semantics.

Every array in this package is a C-contiguous ``numpy.float32`` ndarray.
The operations here are the shared building blocks: a bit-exact binary
tensor format ("SPTN"), a counter-based RNG that produces the same stream
on every platform, and the neural primitives (matmul, layernorm, GELU)
used by the attention and MLP layers.

Determinism contract: matmul accumulates in float32 with a fixed
ascending-k reduction order, so its result is bit-identical to a naive
triple loop and independent of how many rows are computed at once.  That
row independence is what makes routed computation (a row subset) bit-equal
to the dense computation on the same rows.
"""

from __future__ import annotations

import math
import struct

import numpy as np
from scipy.special import erf

MAGIC = b"SPTN"
VERSION = 1
DTYPE_F32 = 0

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


class SptnError(ValueError):
    """Base class for malformed SPTN tensor files."""


class SptnBadMagic(SptnError):
    pass


class SptnBadVersion(SptnError):
    pass


class SptnBadDtype(SptnError):
    pass


class SptnTruncated(SptnError):
    pass


class SptnBadShape(SptnError):
    pass


def _require_f32(t: np.ndarray, name: str = "tensor") -> np.ndarray:
    t = np.asarray(t)
    if t.dtype != np.float32:
        raise TypeError(f"{name} must be float32, got {t.dtype}")
    return np.ascontiguousarray(t)


def tensor_write(t: np.ndarray, path) -> None:
    """Write a float32 tensor in the SPTN binary format.

    Layout: magic ``SPTN``, version byte (1), dtype byte (0 = little-endian
    float32), rank byte, 3 reserved zero bytes, ``rank`` u64 little-endian
    extents, then the raw row-major payload.  ``tensor_read`` inverts this
    bit-exactly.
    """
    t = _require_f32(t)
    if t.ndim < 1 or t.ndim > 255:
        raise SptnBadShape(f"rank must be in [1, 255], got {t.ndim}")
    if any(e <= 0 for e in t.shape):
        raise SptnBadShape(f"extents must be positive, got {t.shape}")
    header = MAGIC + struct.pack("<BBB3x", VERSION, DTYPE_F32, t.ndim)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(dims)
        f.write(t.astype("<f4", copy=False).tobytes())


def tensor_read(path) -> np.ndarray:
    """Read an SPTN file written by :func:`tensor_write`."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 10:
        raise SptnTruncated(f"{path}: header needs 10 bytes, file has {len(raw)}")
    if raw[:4] != MAGIC:
        raise SptnBadMagic(f"{path}: magic {raw[:4]!r} != {MAGIC!r}")
    version, dtype, rank = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise SptnBadVersion(f"{path}: version {version} unsupported")
    if dtype != DTYPE_F32:
        raise SptnBadDtype(f"{path}: dtype code {dtype} unsupported")
    if rank < 1:
        raise SptnBadShape(f"{path}: rank must be >= 1")
    dims_end = 10 + 8 * rank
    if len(raw) < dims_end:
        raise SptnTruncated(f"{path}: truncated dimension block")
    shape = struct.unpack_from(f"<{rank}Q", raw, 10)
    if any(e <= 0 for e in shape):
        raise SptnBadShape(f"{path}: extents must be positive, got {shape}")
    count = math.prod(shape)
    payload = raw[dims_end:]
    if len(payload) < 4 * count:
        raise SptnTruncated(
            f"{path}: payload has {len(payload)} bytes, expected {4 * count}"
        )
    if len(payload) > 4 * count:
        raise SptnBadShape(f"{path}: {len(payload) - 4 * count} trailing bytes")
    data = np.frombuffer(payload, dtype="<f4", count=count)
    return data.reshape(shape).astype(np.float32, copy=True)


class Rng:
    """Counter-based deterministic RNG (splitmix64 finalizer on a counter).

    Output ``i`` of the stream is ``mix64(seed + (i + 1) * GOLDEN)`` with
    all arithmetic mod 2**64, so the stream depends only on (seed, index)
    and is identical on every platform.  Consecutive calls continue the
    stream; jumping is just setting the counter.
    """

    def __init__(self, seed: int):
        self.seed = _U64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 outputs."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = self.seed + idx * _GOLDEN
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))

    def uniform(self, shape) -> np.ndarray:
        """float32 uniforms in [0, 1) with 24-bit resolution."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        bits = (self.raw(n) >> _U64(40)).astype(np.float32)
        out = bits * np.float32(2.0**-24)
        return out.reshape(shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        """float32 standard normals via Box-Muller (float64 internally)."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        pairs = (n + 1) // 2
        # u1 in (0, 1] so log never sees zero
        u1 = ((self.raw(pairs) >> _U64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (self.raw(pairs) >> _U64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (z * std).astype(np.float32).reshape(shape)

    def index(self, n: int) -> int:
        """Integer in [0, n) (modulo reduction; bias is negligible for small n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return int(self.raw(1)[0] % _U64(n))

    def choice_weighted(self, weights: np.ndarray) -> int:
        """Index drawn proportionally to nonnegative ``weights``."""
        cum = np.cumsum(np.asarray(weights, dtype=np.float64))
        total = cum[-1]
        if not total > 0:
            raise ValueError("weights must have positive sum")
        u = (self.raw(1)[0] >> _U64(11)) * 2.0**-53
        return int(min(np.searchsorted(cum, u * total, side="right"), len(cum) - 1))


_mac_count = 0


def reset_mac_count() -> None:
    global _mac_count
    _mac_count = 0


def mac_count() -> int:
    """Multiply-accumulate operations performed by matmul since the last reset."""
    return _mac_count


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Float32 matrix product with a fixed ascending-k reduction order.

    For every output element the partial sums are accumulated over k in
    ascending order, one product at a time, making the result bit-identical
    to a naive triple loop (and the same for any row subset of ``a``).
    """
    global _mac_count
    a = _require_f32(a, "a")
    b = _require_f32(b, "b")
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    m, k = a.shape
    kb, n = b.shape
    if k != kb:
        raise ValueError(f"inner extents disagree: {a.shape} @ {b.shape}")
    out = np.zeros((m, n), dtype=np.float32)
    tmp = np.empty((m, n), dtype=np.float32)
    for p in range(k):
        np.multiply(a[:, p, None], b[p, None, :], out=tmp)
        out += tmp
    _mac_count += m * k * n
    return out


def layernorm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-6,
) -> np.ndarray:
    """Per-row layer normalization with population variance.

    Row-independent: the result of any row depends only on that row, so
    normalizing a gathered subset matches the dense result bit-exactly.
    """
    x = _require_f32(x, "x")
    gamma = _require_f32(gamma, "gamma")
    beta = _require_f32(beta, "beta")
    if x.ndim != 2:
        raise ValueError(f"layernorm expects [N, d], got {x.shape}")
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError("gamma/beta must have shape [d]")
    mean = x.mean(axis=1, keepdims=True, dtype=np.float32)
    centered = x - mean
    var = np.mean(centered * centered, axis=1, keepdims=True, dtype=np.float32)
    inv = np.float32(1.0) / np.sqrt(var + np.float32(eps))
    return centered * inv * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x), evaluated with erf in float32."""
    x = _require_f32(x, "x")
    inv_sqrt2 = np.float32(0.7071067811865476)
    return np.float32(0.5) * x * (np.float32(1.0) + erf(x * inv_sqrt2))
