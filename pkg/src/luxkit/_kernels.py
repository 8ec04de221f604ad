"""Numba kernels for the hot paths: ngram counting, sparse gathers, matmuls.

Accumulation order is fixed everywhere (ascending flat index, ascending
reduction index) so parallel and sequential executions, and batched and
single-document executions, produce bit-identical results.  Keep fastmath
off: reassociation or FMA contraction would break that contract.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def count_vocab_ngrams(tids, doc_offsets, trans_keys, trans_vals, terminal, max_n, out_idx, out_cnt, out_len):
    """Count vocabulary-ngram occurrences per document.

    ``tids`` holds interned token ids for all documents back to back;
    ``doc_offsets`` delimits documents.  The vocabulary is a prefix trie over
    token ids: ``trans_keys`` (sorted) maps packed (node << 32 | tid) edges to
    child nodes in ``trans_vals``; ``terminal[node]`` is the vocabulary index
    ending at that node, or -1.

    For document r the sorted unique vocab indices and their counts are
    written to ``out_idx`` / ``out_cnt`` starting at ``doc_offsets[r] * max_n``
    and ``out_len[r]`` receives the number of entries.
    """
    n_docs = doc_offsets.shape[0] - 1
    n_edges = trans_keys.shape[0]
    for r in prange(n_docs):
        start = doc_offsets[r]
        length = doc_offsets[r + 1] - start
        base = start * max_n
        hits = 0
        for i in range(length):
            node = np.int64(0)
            for n in range(max_n):
                j = i + n
                if j >= length:
                    break
                tid = tids[start + j]
                if tid < 0:
                    break  # token never occurs in any vocab ngram
                key = (node << 32) | tid
                pos = np.searchsorted(trans_keys, key)
                if pos >= n_edges or trans_keys[pos] != key:
                    break
                node = trans_vals[pos]
                vi = terminal[node]
                if vi >= 0:
                    out_idx[base + hits] = vi
                    hits += 1
        ordered = np.sort(out_idx[base : base + hits])
        write = 0
        k = 0
        while k < hits:
            value = ordered[k]
            count = 1
            k += 1
            while k < hits and ordered[k] == value:
                count += 1
                k += 1
            out_idx[base + write] = value
            out_cnt[base + write] = count
            write += 1
        out_len[r] = write


@njit(cache=True, parallel=True)
def gather_scaled_rows(table, idx, val, offsets):
    """Per document: sum of ``val[k] * table[idx[k]]`` over its support.

    This is the sparse-by-dense first layer: table rows are the columns of
    the dense weight matrix.  Support indices arrive sorted ascending and are
    accumulated in that order.
    """
    n = offsets.shape[0] - 1
    d = table.shape[1]
    out = np.zeros((n, d), dtype=table.dtype)
    for r in prange(n):
        for k in range(offsets[r], offsets[r + 1]):
            row = idx[k]
            v = val[k]
            for c in range(d):
                out[r, c] += v * table[row, c]
    return out


@njit(cache=True)
def gather_scaled_cols(weights, idx, val):
    """Single-vector sparse matvec against a (d_out, d_in) weight matrix.

    out = sum_k val[k] * weights[:, idx[k]], accumulated in ascending support
    order; bit-identical to :func:`gather_scaled_rows` on the transposed table.
    """
    d_out = weights.shape[0]
    out = np.zeros(d_out, dtype=weights.dtype)
    for k in range(idx.shape[0]):
        col = idx[k]
        v = val[k]
        for r in range(d_out):
            out[r] += v * weights[r, col]
    return out


@njit(cache=True, parallel=True)
def matmul_wt(x, weights):
    """out = x @ weights.T with a fixed ascending-k accumulation order.

    BLAS is deliberately not used here: its blocking can make row results
    depend on batch size, which would break the exact batch == sequential
    equality the embedding path promises.
    """
    n, d_in = x.shape
    d_out = weights.shape[0]
    out = np.empty((n, d_out), dtype=x.dtype)
    for r in prange(n):
        for j in range(d_out):
            acc = x[r, 0] * weights[j, 0]
            for k in range(1, d_in):
                acc += x[r, k] * weights[j, k]
            out[r, j] = acc
    return out


@njit(cache=True)
def scatter_scaled_rows_add(out, pos, val, offsets, dz):
    """Accumulate first-layer gradients: out[pos[k]] += val[k] * dz[r].

    Serial over documents because different documents may touch the same
    row; the fixed document-then-support order keeps results deterministic.
    """
    n = offsets.shape[0] - 1
    d = out.shape[1]
    for r in range(n):
        for k in range(offsets[r], offsets[r + 1]):
            p = pos[k]
            v = val[k]
            for c in range(d):
                out[p, c] += v * dz[r, c]


def warm_up() -> None:
    """Compile every kernel on tiny inputs (first call otherwise pays JIT cost)."""
    idx = np.zeros(1, dtype=np.int64)
    cnt = np.zeros(1, dtype=np.int64)
    lens = np.zeros(1, dtype=np.int64)
    count_vocab_ngrams(
        np.zeros(1, dtype=np.int64),
        np.array([0, 1], dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        1,
        idx,
        cnt,
        lens,
    )
    for dtype in (np.float32, np.float64):
        table = np.zeros((2, 2), dtype=dtype)
        offs = np.array([0, 1], dtype=np.int64)
        vals = np.ones(1, dtype=dtype)
        gather_scaled_rows(table, idx, vals, offs)
        gather_scaled_cols(table, idx, vals)
        matmul_wt(table, table)
        scatter_scaled_rows_add(table.copy(), idx, vals, offs, table)
