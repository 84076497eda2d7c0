"""Classical baseline for distributed linear classification.

Alice holds x, Bob holds y, both unit vectors with |x.y| >= gamma. They
share a k x N matrix R of uniform bits and use the binary sketch
f(z) = (2R - 1) z / sqrt(k); Alice sends a quantized f(x), Bob replies with
the sign of f(x).f(y). The cost is k * bits_per_coord + 1 bits whatever N is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ValidationError
from .protocol import ALICE, BOB, CommLedger
from .statevec import make_rng

DEFAULT_C = 64.0
DEFAULT_BITS = 16
# rows of R materialized at once
BLOCK_ROWS = 2048


@dataclass(frozen=True, eq=False)
class MarginInstance:
    x: np.ndarray
    y: np.ndarray
    gamma: float
    label: int

    def __post_init__(self):
        for v in (self.x, self.y):
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ValidationError("instance vectors must be unit norm")
        if abs(self.x @ self.y) < self.gamma - 1e-12:
            raise ValidationError(f"|x.y| = {abs(self.x @ self.y)!r} violates margin {self.gamma!r}")


def gen_margin_instance(N: int, gamma: float, label: int, rng) -> MarginInstance:
    """x uniform on the sphere, y = label (gamma x + sqrt(1 - gamma^2) w) with w a unit vector orthogonal to x."""
    if not 0 < gamma <= 1:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma!r}")
    if label not in (-1, 1):
        raise ValidationError("label must be +1 or -1")
    rng = make_rng(rng)
    x = rng.normal(size=N)
    x /= np.linalg.norm(x)
    w = rng.normal(size=N)
    w -= (w @ x) * x
    w -= (w @ x) * x
    w /= np.linalg.norm(w)
    y = label * (gamma * x + math.sqrt(1 - gamma**2) * w)
    y /= np.linalg.norm(y)
    return MarginInstance(x, y, gamma, label)


class BinarySketchMatrix:
    """k x N uniform bit matrix regenerated on demand from a shared seed.

    Rows are produced in packed blocks (8 bits per byte, most significant
    bit first) so that k*N never has to fit in memory at once; the same
    seed always yields the same bits.
    """

    def __init__(self, k: int, N: int, seed):
        self.k, self.N, self.seed = int(k), int(N), seed

    def packed_blocks(self):
        rng = np.random.default_rng(self.seed)
        row_bytes = (self.N + 7) // 8
        for start in range(0, self.k, BLOCK_ROWS):
            rows = min(BLOCK_ROWS, self.k - start)
            raw = np.frombuffer(rng.bytes(rows * row_bytes), dtype=np.uint8)
            yield start, raw.reshape(rows, row_bytes)

    def blocks(self):
        for start, raw in self.packed_blocks():
            yield start, np.unpackbits(raw, axis=1)[:, : self.N]

    def dense(self) -> np.ndarray:
        return np.vstack([b for _, b in self.blocks()])

    def signed_matmul(self, z: np.ndarray) -> np.ndarray:
        """(2R - 1) @ z for an N x m matrix.

        Blocks are multiplied in single precision; the +-1 entries avoid the
        cancellation of forming 2 R z - sum(z), so the relative error stays
        near 1e-7, far below the sketch's own distortion.
        """
        z32 = np.asarray(z, dtype=np.float32)
        out = np.empty((self.k, z.shape[1]))
        for start, block in self.blocks():
            signs = block.astype(np.float32)
            signs *= 2
            signs -= 1
            out[start : start + block.shape[0]] = signs @ z32
        return out


def jl_project(z, R) -> np.ndarray:
    """f(z) = (2R - 1) z / sqrt(k); ``z`` may be a vector or an N x m matrix of columns."""
    z = np.asarray(z, dtype=float)
    vec = z.ndim == 1
    zm = z[:, None] if vec else z
    if isinstance(R, BinarySketchMatrix):
        k, N = R.k, R.N
    else:
        R = np.asarray(R)
        k, N = R.shape
    if zm.shape[0] != N:
        raise ValidationError(f"vector of length {zm.shape[0]} does not match sketch width {N}")
    if isinstance(R, BinarySketchMatrix):
        out = R.signed_matmul(zm) / math.sqrt(k)
    else:
        out = (2.0 * R.astype(np.float64) - 1.0) @ zm / math.sqrt(k)
    return out[:, 0] if vec else out


def sketch_dim(gamma: float, C: float = DEFAULT_C) -> int:
    return math.ceil(round(C / (gamma / 8) ** 2, 9))


def quantize(v: np.ndarray, bound: float, bits: int):
    """Uniform quantizer on [-bound, bound]; returns (codes, reconstruction, step)."""
    levels = 2**bits - 1
    step = 2 * bound / levels
    codes = np.clip(np.round((v + bound) / step), 0, levels).astype(np.int64)
    return codes, codes * step - bound, step


def distortion_events(x, y, fx, fy, eps) -> bool:
    """All three pairwise isometry conditions over {x, y, 0} hold within 1 +- eps."""
    pairs = [(x, fx, 0 * x, 0 * fx), (y, fy, 0 * y, 0 * fy), (x, fx, y, fy)]
    for z, fz, w, fw in pairs:
        d = np.sum((z - w) ** 2)
        fd = np.sum((fz - fw) ** 2)
        if not (1 - eps) * d <= fd <= (1 + eps) * d:
            return False
    return True


def classify_distributed(instance, gamma, C=DEFAULT_C, bits_per_coord=DEFAULT_BITS, rng=None, details=False):
    """Sign of x.y from one sketched message plus a one-bit reply.

    Returns ``(prediction, ledger)``, or ``(prediction, ledger, info)`` when
    ``details`` is set. With gamma = 0 Alice sends x itself (N coordinates).
    """
    rng = make_rng(rng)
    x, y = instance.x, instance.y
    N = x.size
    ledger = CommLedger()
    if gamma < 0 or gamma > 1:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma!r}")
    if gamma == 0:
        bound = 1.0
        _, qx, step = quantize(x, bound, bits_per_coord)
        ledger.send_bits(ALICE, N * bits_per_coord)
        inner = float(qx @ y)
        pred = 1 if inner >= 0 else -1
        ledger.send_bits(BOB, 1)
        info = {"k": N, "inner": inner, "isometry": True}
        return (pred, ledger, info) if details else (pred, ledger)

    k = sketch_dim(gamma, C)
    R = BinarySketchMatrix(k, N, int(rng.integers(2**63)))
    f = jl_project(np.column_stack([x, y]), R)
    fx, fy = f[:, 0], f[:, 1]
    # |f(x)_i| <= ||x||_1 / sqrt(k) <= sqrt(N / k), so nothing is clipped
    bound = math.sqrt(N / k)
    _, qx, step = quantize(fx, bound, bits_per_coord)
    quant_err = np.abs(fy).sum() * step / 2
    if quant_err >= gamma / 8:
        raise ValidationError(
            f"{bits_per_coord} bits per coordinate give inner-product error {quant_err:.3e} >= gamma/8"
        )
    ledger.send_bits(ALICE, k * bits_per_coord)
    inner = float(qx @ fy)
    pred = 1 if inner >= 0 else -1
    ledger.send_bits(BOB, 1)
    if not details:
        return pred, ledger
    info = {
        "k": k,
        "inner": inner,
        "exact_inner": float(fx @ fy),
        "quantization_error_bound": float(quant_err),
        "isometry": distortion_events(x, y, fx, fy, gamma / 8),
    }
    return pred, ledger, info


def classification_bits(N: int, gamma: float, C=DEFAULT_C, bits_per_coord=DEFAULT_BITS) -> int:
    if gamma == 0:
        return N * bits_per_coord + 1
    return sketch_dim(gamma, C) * bits_per_coord + 1


def gap_hamming_to_margin(x_hat, y_hat, g) -> MarginInstance:
    """Bit strings at Hamming distance N/2 +- g/2 as unit vectors with |x.y| >= g/N.

    x = (2 x_hat - 1)/sqrt(N), y likewise, so x.y = (N - 2 d_H)/N.
    """
    x_hat = np.asarray(x_hat, dtype=int).ravel()
    y_hat = np.asarray(y_hat, dtype=int).ravel()
    if x_hat.shape != y_hat.shape:
        raise ValidationError("bit strings must have equal length")
    if np.any((x_hat != 0) & (x_hat != 1)) or np.any((y_hat != 0) & (y_hat != 1)):
        raise ValidationError("inputs must be bit strings")
    N = x_hat.size
    x = (2 * x_hat - 1) / math.sqrt(N)
    y = (2 * y_hat - 1) / math.sqrt(N)
    d = int(np.sum(x_hat != y_hat))
    if abs(N - 2 * d) < g:
        raise ValidationError(f"Hamming distance {d} is within g/2 of N/2; promise violated")
    inner = (N - 2 * d) / N
    return MarginInstance(x, y, g / N, 1 if inner >= 0 else -1)
