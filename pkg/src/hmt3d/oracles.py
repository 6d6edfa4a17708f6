"""Brute-force reference implementations.

Each function here recomputes a result the slow, obvious way, sharing no
code path with the implementation it checks. They back the test suite and
``hmt3d selftest``.
"""
import itertools
import math

import numpy as np


def triple_loop_matmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def scalar_gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def scalar_mlp(x, p):
    """Per-element MLP forward with explicit loops (GELU activation)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.shape[0], p.w2.shape[1]))
    for r in range(x.shape[0]):
        hidden = []
        for h in range(p.w1.shape[1]):
            s = p.b1[h]
            for i in range(x.shape[1]):
                s += x[r, i] * p.w1[i, h]
            hidden.append(scalar_gelu(s))
        for o in range(p.w2.shape[1]):
            s = p.b2[o]
            for h, v in enumerate(hidden):
                s += v * p.w2[h, o]
            out[r, o] = s
    return out


def reduced_softmax(logits, mask):
    """Softmax over the valid sub-vector, re-expanded with zeros."""
    logits = list(map(float, logits))
    valid = [i for i, m in enumerate(mask) if m]
    peak = max(logits[i] for i in valid)
    ex = {i: math.exp(logits[i] - peak) for i in valid}
    total = sum(ex.values())
    return np.array([ex[i] / total if i in ex else 0.0 for i in range(len(logits))])


def bin_points(points, range_min, range_max, voxel_size):
    """Occupied cells by independent per-point binning: {cell: [point rows]}."""
    cells = {}
    for row, p in enumerate(np.asarray(points, dtype=float)):
        if not all(lo <= v < hi for v, lo, hi in zip(p[:3], range_min, range_max)):
            continue
        cell = tuple(int(math.floor((v - lo) / s)) for v, lo, s in zip(p[:3], range_min, voxel_size))
        cells.setdefault(cell, []).append(row)
    return cells


def hilbert_path_ok(order_bits, index_fn, coord_fn):
    """Exhaustive round trip + unit-step adjacency for one curve order."""
    side = 1 << order_bits
    for cell in itertools.product(range(side), repeat=3):
        if tuple(coord_fn(index_fn(cell, order_bits), order_bits)) != cell:
            return False
    prev = None
    seen = set()
    for idx in range(side ** 3):
        cur = tuple(coord_fn(idx, order_bits))
        seen.add(cur)
        if prev is not None and sum(abs(a - b) for a, b in zip(prev, cur)) != 1:
            return False
        prev = cur
    return len(seen) == side ** 3


def solve_overlaps(length, group_size):
    """Enumerate (base, count) overlap patterns meeting the equal-overlap rules.

    Returns the list of all non-increasing overlap vectors with spread <= 1
    whose groups exactly tile [0, length). For valid inputs it has exactly
    one element.
    """
    num = -(-length // group_size)
    if num <= 1:
        return [()]
    excess = num * group_size - length
    found = []
    for base in range(group_size):
        for bigger in range(num):
            if bigger * (base + 1) + (num - 1 - bigger) * base == excess:
                vec = (base + 1,) * bigger + (base,) * (num - 1 - bigger)
                if vec not in found:
                    found.append(vec)
    return found


def layout_violations(layout, length, group_size):
    """Constraint check by explicit position counting."""
    problems = []
    span = min(group_size, length)
    num = -(-length // group_size)
    if len(layout.starts) != num:
        problems.append(f"group count {len(layout.starts)} != {num}")
    hits = [0] * length
    for s in layout.starts:
        if s < 0 or s + span > length:
            problems.append(f"group at {s} leaves [0, {length})")
            continue
        for p in range(s, s + span):
            hits[p] += 1
    if any(h == 0 for h in hits):
        problems.append("uncovered position")
    if layout.starts and layout.starts[-1] + span != length:
        problems.append("last group does not end at L")
    actual = [a + span - b for a, b in zip(layout.starts, layout.starts[1:])]
    if list(layout.overlaps) != actual:
        problems.append(f"overlaps {layout.overlaps} disagree with starts {layout.starts}")
    if actual and max(actual) - min(actual) > 1:
        problems.append(f"overlap spread {max(actual) - min(actual)}")
    if tuple(actual) not in solve_overlaps(length, group_size):
        problems.append("overlap vector not the solver's solution")
    return problems


def naive_scan(tokens, p, direction="forward"):
    """Step-by-step selective scan with scalar loops."""
    x = np.asarray(tokens, dtype=float)
    if direction == "backward":
        x = x[::-1]
    m, d = x.shape
    n = p.A.shape[1]
    y = np.zeros((m, d))
    h = [[0.0] * n for _ in range(d)]
    for t in range(m):
        dt = [math.log1p(math.exp(-abs(v))) + max(v, 0.0) for v in (x[t] @ p.w_dt + p.b_dt)]
        B = x[t] @ p.w_b
        C = x[t] @ p.w_c
        for c in range(d):
            out = 0.0
            for j in range(n):
                h[c][j] = math.exp(dt[c] * p.A[c, j]) * h[c][j] + dt[c] * B[j] * x[t, c]
                out += C[j] * h[c][j]
            y[t, c] = out + p.D[c] * x[t, c]
    return y[::-1] if direction == "backward" else y


def dense_masked_attention(Q, K, V, key_mask):
    """Plain softmax attention restricted to the unmasked key rows."""
    keep = np.flatnonzero(key_mask)
    Ks, Vs = K[keep], V[keep]
    out = np.zeros((Q.shape[0], V.shape[1]))
    for i, q in enumerate(Q):
        logits = np.array([float(np.dot(q, k)) for k in Ks]) / math.sqrt(Q.shape[1])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        out[i] = w @ Vs
    return out


def per_head_attention(query_seq, kv_seq, key_mask, proj, heads):
    """Multi-head attention via explicit per-head loops."""
    d = query_seq.shape[1]
    dk = d // heads
    Q = query_seq @ proj.wq
    K = kv_seq @ proj.wk
    V = kv_seq @ proj.wv
    merged = np.zeros((query_seq.shape[0], d))
    for h in range(heads):
        sl = slice(h * dk, (h + 1) * dk)
        merged[:, sl] = dense_masked_attention(Q[:, sl], K[:, sl], V[:, sl], key_mask)
    return merged @ proj.wo + proj.bo


def brute_knn(coords, ids, k_total):
    """{id: [neighbor ids]} by sorting every other member on (dist^2, id)."""
    pts = {int(i): tuple(int(v) for v in c) for i, c in zip(ids, np.asarray(coords))}
    table = {}
    for i, c in pts.items():
        others = sorted((sum((a - b) ** 2 for a, b in zip(c, o)), j) for j, o in pts.items() if j != i)
        table[i] = [j for _, j in others[:k_total - 1]]
    return table


def dense_subm_conv(coords, feats, extents, weight, bias):
    """Dense 3D convolution (zero padding) read back at the active sites."""
    nx, ny, nz = extents
    d_in = feats.shape[1]
    dense = np.zeros((nx + 2, ny + 2, nz + 2, d_in))
    for c, f in zip(coords, feats):
        dense[c[0] + 1, c[1] + 1, c[2] + 1] = f
    out = np.zeros((len(coords), weight.shape[-1]))
    for r, (x, y, z) in enumerate(coords):
        acc = bias.copy()
        for dx, dy, dz in itertools.product(range(3), repeat=3):
            acc = acc + dense[x + dx, y + dy, z + dz] @ weight[dx, dy, dz]
        out[r] = acc
    return out
