"""Selective state-space scan and the serialized bidirectional block.

Recurrence (per channel c, state j), zero initial state:

    h_t = exp(dt_t[c] * A[c, j]) * h_{t-1} + dt_t[c] * B_t[j] * x_t[c]
    y_t[c] = sum_j C_t[j] * h_t[c, j] + D[c] * x_t[c]

with dt = softplus(x W_dt + b_dt), B = x W_B, C = x W_C computed per token,
following the selective SSM of Gu & Dao (Mamba, 2023).
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .curves import CurveKind, CurveOrder, sequence_voxels
from .grouping import equal_overlap_groups
from .numerics import DTYPE, MLPParams, ShapeError, layer_norm, matmul, silu, uniform_init
from .voxel_grid import absolute_pos_encode


@njit(cache=True, nogil=True)
def _scan_kernel(x, w_dt, b_dt, w_b, w_c, A, D, y):
    # x, y: (S, m, d). One pass over time; per-token projections are formed
    # on the fly (same left-to-right sums as matmul) so working memory is
    # O(d * n) whatever the sequence length.
    seqs, steps, d = x.shape
    n = A.shape[1]
    h = np.zeros((d, n))
    dt = np.zeros(d)
    bt = np.zeros(n)
    ct = np.zeros(n)
    for s in range(seqs):
        h[:, :] = 0.0
        for t in range(steps):
            dt[:] = 0.0
            bt[:] = 0.0
            ct[:] = 0.0
            for k in range(d):
                xk = x[s, t, k]
                for c in range(d):
                    dt[c] += xk * w_dt[k, c]
                for j in range(n):
                    bt[j] += xk * w_b[k, j]
                    ct[j] += xk * w_c[k, j]
            for c in range(d):
                v = dt[c] + b_dt[c]
                # softplus, overflow-safe
                delta = max(v, 0.0) + np.log1p(np.exp(-abs(v)))
                dx = delta * x[s, t, c]
                acc = 0.0
                for j in range(n):
                    h[c, j] = np.exp(delta * A[c, j]) * h[c, j] + dx * bt[j]
                    acc += ct[j] * h[c, j]
                y[s, t, c] = acc + D[c] * x[s, t, c]


@dataclass(frozen=True)
class SSMParams:
    A: np.ndarray        # (d, n), strictly negative
    w_dt: np.ndarray     # (d, d)
    b_dt: np.ndarray     # (d,)
    w_b: np.ndarray      # (d, n)
    w_c: np.ndarray      # (d, n)
    D: np.ndarray        # (d,)

    @classmethod
    def init(cls, rng, d, n=16):
        return cls(
            A=-np.tile(np.arange(1, n + 1, dtype=DTYPE), (d, 1)),
            w_dt=uniform_init(rng, d, (d, d)),
            b_dt=uniform_init(rng, d, (d,)),
            w_b=uniform_init(rng, d, (d, n)),
            w_c=uniform_init(rng, d, (d, n)),
            D=np.ones(d),
        )

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


def selective_scan(tokens, params, direction="forward"):
    """Scan (..., m, d) tokens; leading dims are independent sequences."""
    x = np.asarray(tokens, dtype=DTYPE)
    if x.ndim < 2 or x.shape[-1] != params.d:
        raise ShapeError(f"tokens {x.shape} do not match model dim {params.d}")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    if direction == "backward":
        x = x[..., ::-1, :]
    m = x.shape[-2]
    lead = x.shape[:-2]
    flat = (int(np.prod(lead)), m, params.d)
    y = np.zeros(flat)
    _scan_kernel(np.ascontiguousarray(x).reshape(flat),
                 *(np.ascontiguousarray(a, dtype=DTYPE)
                   for a in (params.w_dt, params.b_dt, params.w_b, params.w_c, params.A, params.D)), y)
    y = y.reshape(lead + (m, params.d))
    if direction == "backward":
        y = y[..., ::-1, :]
    return y


@dataclass(frozen=True)
class MixerParams:
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    w_in: np.ndarray     # (d, 2d): scan branch and gate branch
    forward: SSMParams
    backward: SSMParams
    w_out: np.ndarray    # (d, d)

    @classmethod
    def init(cls, rng, d, n=16):
        return cls(
            ln_gain=np.ones(d), ln_bias=np.zeros(d),
            w_in=uniform_init(rng, d, (d, 2 * d)),
            forward=SSMParams.init(rng, d, n),
            backward=SSMParams.init(rng, d, n),
            w_out=uniform_init(rng, d, (d, d)),
        )


def bidirectional_ssm(tokens, params):
    """Pre-norm, gated, bidirectional mixer. Returns the pre-residual output."""
    x = np.asarray(tokens, dtype=DTYPE)
    d = params.w_out.shape[0]
    if x.shape[-1] != d:
        raise ShapeError(f"tokens {x.shape} do not match model dim {d}")
    normed = layer_norm(x, params.ln_gain, params.ln_bias)
    uz = matmul(normed, params.w_in)
    u, z = silu(uz[..., :d]), uz[..., d:]
    y = selective_scan(u, params.forward, "forward") + selective_scan(u, params.backward, "backward")
    return matmul(y * silu(z), params.w_out)


@dataclass(frozen=True)
class MambaBlockParams:
    pos: MLPParams
    mixer: MixerParams

    @classmethod
    def init(cls, rng, d, n=16):
        return cls(MLPParams.init(rng, 3, d, d), MixerParams.init(rng, d, n))


def serialized_mamba_block(grid, axis, group_size, params):
    """Position-encode, axis-sort, overlap-group, scan, scatter back, residual."""
    if not len(grid):
        return grid
    kind = CurveKind(axis)
    if kind not in (CurveKind.AXIS_X, CurveKind.AXIS_Y):
        raise ValueError("serialized mamba block sorts along axis-x or axis-y")
    feats = grid.feats
    x = feats + absolute_pos_encode(grid.coords, grid.spec, params.pos)
    order = sequence_voxels(grid.coords, CurveOrder(kind))
    layout = equal_overlap_groups(len(grid), group_size)
    idx = order[layout.index_matrix()]
    out = bidirectional_ssm(x[idx], params.mixer)

    acc = np.zeros_like(feats)
    count = np.zeros(len(grid))
    for g in range(layout.num_groups):
        acc[idx[g]] += out[g]
        count[idx[g]] += 1
    return grid.with_feats(feats + acc / count[:, None])
