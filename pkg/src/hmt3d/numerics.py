"""Dense kernels shared by every neural block.

Matrices are plain float64 numpy arrays. Every reduction that feeds a model
output runs in a fixed, left-to-right order so that results are
bit-reproducible regardless of BLAS builds or thread counts; nothing here
dispatches to BLAS. The hot loops are compiled with numba (no fast-math, so
no reassociation or FMA contraction).
"""
import zlib
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import erf

DTYPE = np.float64


class ShapeError(ValueError):
    pass


def make_rng(seed):
    """Seeded generator. PCG64 streams are stable across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed, *path):
    """Independent stream for a named sub-component, e.g. (seed, block, 'attn')."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode()))
        else:
            words.append(int(p))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


@njit(cache=True, nogil=True)
def _matmul_kernel(a, b, out):
    # a (B, M, K), b (B or 1, K, N); k innermost-to-outer order fixed per output
    batch, rows, depth = a.shape
    cols = b.shape[2]
    for s in range(batch):
        sb = s if b.shape[0] > 1 else 0
        for i in range(rows):
            for k in range(depth):
                aik = a[s, i, k]
                for j in range(cols):
                    out[s, i, j] += aik * b[sb, k, j]


def matmul(a, b):
    """a @ b with the contraction accumulated left to right over k.

    ``a`` may be a vector or carry leading batch dims (..., M, K); ``b`` is
    (K, N) or broadcast-compatible (..., K, N).
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim == 1:
        return matmul(a[None, :], b)[..., 0, :]
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    (m, k), n = a.shape[-2:], b.shape[-1]
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a3 = np.ascontiguousarray(np.broadcast_to(a, lead + (m, k))).reshape(-1, m, k)
    if b.ndim == 2:
        b3 = np.ascontiguousarray(b)[None]
    else:
        b3 = np.ascontiguousarray(np.broadcast_to(b, lead + (k, n))).reshape(-1, k, n)
    out = np.zeros((a3.shape[0], m, n), dtype=DTYPE)
    if out.size:
        _matmul_kernel(a3, b3, out)
    return out.reshape(lead + (m, n))


def linear(x, weight, bias=None):
    y = matmul(x, weight)
    if bias is not None:
        y += bias
    return y


def ordered_sum(x, axis=-1):
    """Sequential sum along ``axis`` (np.sum uses pairwise blocking)."""
    x = np.asarray(x, dtype=DTYPE)
    x = np.moveaxis(x, axis, -1)
    out = np.zeros(x.shape[:-1], dtype=DTYPE)
    for k in range(x.shape[-1]):
        out += x[..., k]
    return out


def softmax_masked(logits, mask):
    """Softmax over the entries where ``mask`` is true, along the last axis.

    Masked-out positions get weight exactly 0. Raises ValueError if any row
    has no valid entry.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape[-1] != mask.shape[-1]:
        raise ShapeError(f"logits {logits.shape} and mask {mask.shape} differ")
    mask = np.broadcast_to(mask, logits.shape)
    if not mask.any(axis=-1).all():
        raise ValueError("softmax_masked: a row has every entry masked")
    safe = np.where(mask, logits, -np.inf)
    peak = safe.max(axis=-1, keepdims=True)
    ex = np.where(mask, np.exp(np.where(mask, logits, peak) - peak), 0.0)
    return ex / ordered_sum(ex)[..., None]


def layer_norm(x, gain, bias, eps=1e-5):
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != np.shape(gain)[-1] or x.shape[-1] != np.shape(bias)[-1]:
        raise ShapeError(f"layer_norm: x {x.shape}, gain {np.shape(gain)}, bias {np.shape(bias)}")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def softplus(x):
    return np.logaddexp(0.0, x)


ACTIVATIONS = {
    "gelu": gelu,
    "relu": lambda x: np.maximum(x, 0.0),
    "silu": silu,
    "linear": lambda x: x,
}


@dataclass(frozen=True)
class MLPParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "gelu"

    @classmethod
    def init(cls, rng, d_in, d_hidden, d_out, activation="gelu"):
        return cls(
            w1=uniform_init(rng, d_in, (d_in, d_hidden)),
            b1=uniform_init(rng, d_in, (d_hidden,)),
            w2=uniform_init(rng, d_hidden, (d_hidden, d_out)),
            b2=uniform_init(rng, d_hidden, (d_out,)),
            activation=activation,
        )

    @property
    def d_in(self):
        return self.w1.shape[0]

    @property
    def d_out(self):
        return self.w2.shape[1]


def mlp_forward(x, params):
    """act(x W1 + b1) W2 + b2."""
    x = np.asarray(x, dtype=DTYPE)
    if params.w1.shape[1] != params.b1.shape[0] or params.w1.shape[1] != params.w2.shape[0] \
            or params.w2.shape[1] != params.b2.shape[0]:
        raise ShapeError("mlp parameter shapes do not chain")
    act = ACTIVATIONS[params.activation]
    hidden = act(linear(x, params.w1, params.b1))
    return linear(hidden, params.w2, params.b2)


@dataclass(frozen=True)
class LinearParams:
    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, rng, d_in, d_out):
        return cls(uniform_init(rng, d_in, (d_in, d_out)), uniform_init(rng, d_in, (d_out,)))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)
