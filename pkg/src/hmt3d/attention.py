"""Window-local cross-attention between Hilbert and trans-Hilbert groupings."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grouping import PAD, window_groups
from .numerics import DTYPE, MLPParams, ShapeError, layer_norm, matmul, mlp_forward, softmax_masked, uniform_init


@dataclass(frozen=True)
class HeadProjections:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray

    @classmethod
    def init(cls, rng, d):
        return cls(*(uniform_init(rng, d, (d, d)) for _ in range(4)), uniform_init(rng, d, (d,)))


@dataclass(frozen=True)
class AttentionParams:
    heads: int
    h_query: HeadProjections    # Hilbert queries, trans-Hilbert keys/values
    ht_query: HeadProjections   # trans-Hilbert queries, Hilbert keys/values
    rpe: MLPParams              # relative offset (3) -> d
    ffn: MLPParams              # d -> 2d -> d
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray

    def __post_init__(self):
        d = self.h_query.wq.shape[0]
        if d % self.heads:
            raise ValueError(f"feature dim {d} is not divisible by {self.heads} heads")

    @classmethod
    def init(cls, rng, d, heads=4):
        return cls(
            heads=heads,
            h_query=HeadProjections.init(rng, d),
            ht_query=HeadProjections.init(rng, d),
            rpe=MLPParams.init(rng, 3, d, d),
            ffn=MLPParams.init(rng, d, 2 * d, d),
            ln1_gain=np.ones(d), ln1_bias=np.zeros(d),
            ln2_gain=np.ones(d), ln2_bias=np.zeros(d),
        )

    @property
    def d(self):
        return self.h_query.wq.shape[0]


def attention_weights(Q, K, key_mask):
    Q = np.asarray(Q, dtype=DTYPE)
    K = np.asarray(K, dtype=DTYPE)
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeError(f"query {Q.shape} and key {K.shape} widths differ")
    logits = matmul(Q, np.swapaxes(K, -1, -2)) / np.sqrt(Q.shape[-1])
    return softmax_masked(logits, np.asarray(key_mask, dtype=bool)[..., None, :])


def scaled_dot_attention(Q, K, V, key_mask):
    """softmax(Q K^T / sqrt(d_k)) V over unmasked keys; (..., g, d_k) operands."""
    return matmul(attention_weights(Q, K, key_mask), V)


def _split_heads(x, heads):
    *lead, g, d = x.shape
    return np.swapaxes(x.reshape(*lead, g, heads, d // heads), -2, -3)


def _merge_heads(x):
    *lead, heads, g, dk = x.shape
    return np.swapaxes(x, -2, -3).reshape(*lead, g, heads * dk)


def multi_head_attention(query_seq, kv_seq, key_mask, proj, heads):
    Q = _split_heads(matmul(query_seq, proj.wq), heads)
    K = _split_heads(matmul(kv_seq, proj.wk), heads)
    V = _split_heads(matmul(kv_seq, proj.wv), heads)
    mask = np.asarray(key_mask, dtype=bool)[..., None, :]
    return matmul(_merge_heads(scaled_dot_attention(Q, K, V, mask)), proj.wo) + proj.bo


def cross_attention_pair(seq_h, seq_ht, params, mask_h, mask_ht):
    """Each ordering queries the other: (out_H, out_HT)."""
    seq_h = np.asarray(seq_h, dtype=DTYPE)
    seq_ht = np.asarray(seq_ht, dtype=DTYPE)
    if seq_h.shape != seq_ht.shape:
        raise ShapeError(f"paired groups differ in shape: {seq_h.shape} vs {seq_ht.shape}")
    out_h = multi_head_attention(seq_h, seq_ht, mask_ht, params.h_query, params.heads)
    out_ht = multi_head_attention(seq_ht, seq_h, mask_h, params.ht_query, params.heads)
    return out_h, out_ht


@dataclass(frozen=True)
class NeighborTable:
    ids: np.ndarray        # (l,) member voxel ids, ascending
    neighbors: np.ndarray  # (l, k) neighbor ids, PAD past ``counts``
    offsets: np.ndarray    # (l, k, 3) neighbor coord - own coord
    counts: np.ndarray     # (l,)


def knn_table(coords, ids, k_total, row_chunk=512):
    """K-1 nearest other members per voxel; ties by ascending voxel id."""
    if k_total < 2:
        raise ValueError("K must be >= 2")
    ids = np.asarray(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    pts = np.asarray(coords, dtype=np.int64).reshape(-1, 3)[order]
    n = len(ids)
    k = min(k_total - 1, max(n - 1, 0))
    width = k_total - 1
    neighbors = np.full((n, width), PAD, dtype=np.int64)
    offsets = np.zeros((n, width, 3), dtype=np.int64)
    if k > 0:
        cols = np.arange(n)
        for lo in range(0, n, row_chunk):
            rows = np.arange(lo, min(lo + row_chunk, n))
            diff = pts[None, :, :] - pts[rows, None, :]
            d2 = (diff * diff).sum(axis=-1)
            # distance-major composite key; column order is id order
            key = d2 * n + cols
            key[np.arange(len(rows)), rows] = np.iinfo(np.int64).max
            part = np.argpartition(key, k - 1, axis=1)[:, :k]
            part = np.take_along_axis(part, np.argsort(np.take_along_axis(key, part, 1), axis=1), 1)
            neighbors[rows, :k] = ids[part]
            offsets[rows, :k] = np.take_along_axis(diff, part[..., None], 1)
    return NeighborTable(ids, neighbors, offsets, np.full(n, k, dtype=np.int64))


def knn_relative_encode(coords, ids, k_total, mlp):
    """Per-member feature delta: element-wise max of MLP(offset) over neighbors.

    Rows follow ascending voxel id. Members without neighbors get zeros.
    """
    table = knn_table(coords, ids, k_total)
    n, d = len(table.ids), mlp.d_out
    k = int(table.counts[0]) if n else 0
    if k == 0:
        return table, np.zeros((n, d))
    encoded = mlp_forward(table.offsets[:, :k].astype(DTYPE), mlp)
    return table, encoded.max(axis=1)


def _window_forward(grid, members, batch_h, batch_ht, k_total, params, pad_fill):
    feats = grid.feats
    _, delta = knn_relative_encode(grid.coords[members], members, k_total, params.rpe)
    x0 = feats[members] + delta

    # members are ascending, so slot ids map to rows by binary search
    local_h = np.where(batch_h.mask, np.searchsorted(members, batch_h.slots), len(members))
    local_ht = np.where(batch_ht.mask, np.searchsorted(members, batch_ht.slots), len(members))
    table = np.vstack([x0, np.zeros((1, grid.d))])
    seq_h, seq_ht = table[local_h], table[local_ht]
    mask_h, mask_ht = batch_h.mask, batch_ht.mask
    if pad_fill is not None:
        seq_h[~mask_h] = pad_fill(seq_h[~mask_h].shape)
        seq_ht[~mask_ht] = pad_fill(seq_ht[~mask_ht].shape)

    out_h, out_ht = cross_attention_pair(seq_h, seq_ht, params, mask_h, mask_ht)
    attn = np.zeros_like(x0)
    attn[local_h[mask_h]] += out_h[mask_h]
    attn[local_ht[mask_ht]] += out_ht[mask_ht]
    x1 = layer_norm(x0 + attn, params.ln1_gain, params.ln1_bias)
    return layer_norm(x1 + mlp_forward(x1, params.ffn), params.ln2_gain, params.ln2_bias)


def grouped_transformer_block(grid, window_shape, group_size, k_total, params, threads=1, pad_fill=None):
    """Relative-position fusion + Hilbert/trans-Hilbert cross-attention per window.

    ``pad_fill(shape)`` overrides the zero features placed in padding slots
    (test hook; masked slots must not influence real outputs).
    """
    if not len(grid):
        return grid
    windows = window_groups(grid.coords, window_shape, group_size)

    def run(item):
        _, members, batch_h, batch_ht = item
        return members, _window_forward(grid, members, batch_h, batch_ht, k_total, params, pad_fill)

    if threads > 1 and len(windows) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, windows))
    else:
        results = [run(w) for w in windows]
    out = np.array(grid.feats)
    for members, feats in results:
        out[members] = feats
    return grid.with_feats(out)

