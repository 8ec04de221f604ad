"""TF-IDF featurization: token sequences -> sparse unit vectors.

``featurize`` is the readable reference path (dictionary counting);
``featurize_csr`` / ``featurize_batch`` run the same counting through a
numba prefix-trie kernel for throughput.  Both feed identical integer
counts into one shared weighting/normalization step, so their outputs are
bit-identical, which the test suite asserts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError
from .vocab import NGRAM_SEP, NgramVocab, iter_ngrams

# Keep per-chunk hit buffers (8 bytes/entry, tokens * max_n entries) modest.
_CHUNK_BUFFER_ENTRIES = 1 << 21


def extract_ngrams(tokens: list[str], max_n: int) -> list[str]:
    """All contiguous ngrams of orders 1..max_n as separator-joined keys.

    Ordering: every 1-gram in positional order, then every 2-gram, etc.
    L tokens yield sum(max(0, L - n + 1) for n in 1..max_n) keys.
    """
    return list(iter_ngrams(tokens, max_n))


@dataclass(eq=False)
class SparseVector:
    """TF-IDF weighted, L2-normalized bag of ngrams over a fixed vocabulary.

    ``indices`` are strictly increasing positions below ``dim``; ``values``
    are positive and finite.  A document matching no vocabulary ngram is the
    empty (zero) vector; otherwise the L2 norm is 1 within 1e-6.
    """

    dim: int
    indices: np.ndarray  # (nnz,) uint32, strictly increasing
    values: np.ndarray  # (nnz,) float32, all > 0

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.uint32)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-D and the same length")

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def is_empty(self) -> bool:
        return self.nnz == 0

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values.astype(np.float64) ** 2)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float32)
        out[self.indices] = self.values
        return out


@dataclass(eq=False)
class SparseBatch:
    """A batch of sparse vectors in flat CSR-style storage.

    Row r occupies ``indices[offsets[r]:offsets[r+1]]`` (sorted ascending)
    and the matching ``values``.  This is the layout the kernels consume.
    """

    dim: int
    indices: np.ndarray  # (total_nnz,) int64
    values: np.ndarray  # (total_nnz,) float32
    offsets: np.ndarray  # (n+1,) int64

    def __len__(self) -> int:
        return self.offsets.shape[0] - 1

    def row(self, r: int) -> SparseVector:
        lo, hi = self.offsets[r], self.offsets[r + 1]
        return SparseVector(
            dim=self.dim,
            indices=self.indices[lo:hi].astype(np.uint32),
            values=self.values[lo:hi].copy(),
        )

    def nnz(self, r: int) -> int:
        return int(self.offsets[r + 1] - self.offsets[r])

    def empty_rows(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.offsets) == 0)


def _tfidf_unit(indices: np.ndarray, counts: np.ndarray, idf: np.ndarray):
    """Shared weighting step: counts * idf, drop zero weights, L2-normalize.

    Works in float64 with a fixed ascending-index order and rounds to
    float32 at the end, so every caller gets identical bits for identical
    integer counts.
    """
    weights = counts.astype(np.float64) * idf[indices].astype(np.float64)
    keep = weights > 0.0
    if not keep.all():
        indices = indices[keep]
        weights = weights[keep]
    if weights.size == 0:
        return indices[:0], np.empty(0, dtype=np.float32)
    norm = np.sqrt(np.sum(weights * weights))
    return indices, (weights / norm).astype(np.float32)


def _check_dims(vocab: NgramVocab, idf: np.ndarray) -> np.ndarray:
    idf = np.asarray(idf, dtype=np.float32)
    if idf.ndim != 1 or idf.shape[0] != vocab.size:
        raise ConfigError(
            f"idf vector has {idf.shape} entries but vocabulary size is {vocab.size}"
        )
    return idf


def featurize(tokens: list[str], vocab: NgramVocab, idf: np.ndarray) -> SparseVector:
    """TF-IDF unit vector for one token sequence (reference implementation).

    Raw term frequency times idf, L2-normalized; ngrams outside the
    vocabulary are silently dropped.  Returns the empty vector when nothing
    matches (or when every match has zero idf weight).
    """
    idf = _check_dims(vocab, idf)
    lookup = vocab.entries.get
    counts: dict[int, int] = {}
    for key in iter_ngrams(tokens, vocab.max_n):
        idx = lookup(key)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return SparseVector(vocab.size, np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float32))
    order = sorted(counts)
    idx_arr = np.array(order, dtype=np.int64)
    cnt_arr = np.array([counts[i] for i in order], dtype=np.int64)
    idx_arr, values = _tfidf_unit(idx_arr, cnt_arr, idf)
    return SparseVector(vocab.size, idx_arr.astype(np.uint32), values)


class _TrieIndex:
    """Vocabulary compiled to the id-packed prefix trie the kernel walks."""

    def __init__(self, vocab: NgramVocab):
        token_ids: dict[str, int] = {}
        edges: dict[int, int] = {}  # (node << 32 | tid) -> child node
        terminal = [-1]  # node 0 is the root
        next_node = 1
        for key, vocab_index in vocab.entries.items():
            node = 0
            for token in key.split(NGRAM_SEP):
                tid = token_ids.setdefault(token, len(token_ids))
                packed = (node << 32) | tid
                child = edges.get(packed)
                if child is None:
                    child = next_node
                    next_node += 1
                    edges[packed] = child
                    terminal.append(-1)
                node = child
            terminal[node] = vocab_index
        keys = np.fromiter(edges.keys(), dtype=np.int64, count=len(edges))
        vals = np.fromiter(edges.values(), dtype=np.int64, count=len(edges))
        order = np.argsort(keys, kind="stable")
        self.token_ids = token_ids
        self.trans_keys = keys[order]
        self.trans_vals = vals[order]
        self.terminal = np.array(terminal, dtype=np.int64)
        self.max_n = vocab.max_n

    def intern(self, tokens: list[str]) -> np.ndarray:
        get = self.token_ids.get
        return np.fromiter((get(t, -1) for t in tokens), dtype=np.int64, count=len(tokens))


def _trie_index(vocab: NgramVocab) -> _TrieIndex:
    cached = getattr(vocab, "_trie_index_cache", None)
    if cached is None:
        cached = _TrieIndex(vocab)
        vocab._trie_index_cache = cached
    return cached


def featurize_csr(
    token_seqs: Sequence[list[str]], vocab: NgramVocab, idf: np.ndarray
) -> SparseBatch:
    """Featurize a batch into flat CSR storage via the trie kernel.

    Row r is bit-identical to ``featurize(token_seqs[r], vocab, idf)``.
    """
    idf = _check_dims(vocab, idf)
    index = _trie_index(vocab)
    max_n = index.max_n

    all_idx: list[np.ndarray] = []
    all_val: list[np.ndarray] = []
    lengths = np.zeros(len(token_seqs), dtype=np.int64)

    chunk_docs = _chunk_sizes(token_seqs, max_n)
    doc0 = 0
    for n_docs in chunk_docs:
        seqs = token_seqs[doc0 : doc0 + n_docs]
        offsets = np.zeros(n_docs + 1, dtype=np.int64)
        for i, seq in enumerate(seqs):
            offsets[i + 1] = offsets[i] + len(seq)
        tids = np.empty(offsets[-1], dtype=np.int64)
        for i, seq in enumerate(seqs):
            tids[offsets[i] : offsets[i + 1]] = index.intern(seq)
        buf = int(offsets[-1]) * max_n
        out_idx = np.empty(max(buf, 1), dtype=np.int64)
        out_cnt = np.empty(max(buf, 1), dtype=np.int64)
        out_len = np.zeros(n_docs, dtype=np.int64)
        _kernels.count_vocab_ngrams(
            tids, offsets, index.trans_keys, index.trans_vals, index.terminal,
            max_n, out_idx, out_cnt, out_len,
        )
        for i in range(n_docs):
            base = int(offsets[i]) * max_n
            k = int(out_len[i])
            idx_arr, values = _tfidf_unit(out_idx[base : base + k], out_cnt[base : base + k], idf)
            all_idx.append(idx_arr)
            all_val.append(values)
            lengths[doc0 + i] = idx_arr.shape[0]
        doc0 += n_docs

    row_offsets = np.zeros(len(token_seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=row_offsets[1:])
    flat_idx = np.concatenate(all_idx) if all_idx else np.empty(0, dtype=np.int64)
    flat_val = np.concatenate(all_val) if all_val else np.empty(0, dtype=np.float32)
    return SparseBatch(
        dim=vocab.size,
        indices=flat_idx.astype(np.int64),
        values=flat_val,
        offsets=row_offsets,
    )


def _chunk_sizes(token_seqs: Sequence[list[str]], max_n: int) -> list[int]:
    """Split the batch so each chunk's hit buffer stays under the cap."""
    sizes: list[int] = []
    current = 0
    entries = 0
    for seq in token_seqs:
        cost = len(seq) * max_n
        if current > 0 and entries + cost > _CHUNK_BUFFER_ENTRIES:
            sizes.append(current)
            current = 0
            entries = 0
        current += 1
        entries += cost
    if current:
        sizes.append(current)
    return sizes


def featurize_batch(
    token_seqs: Sequence[list[str]], vocab: NgramVocab, idf: np.ndarray
) -> list[SparseVector]:
    """Elementwise equal to mapping :func:`featurize` over the inputs."""
    batch = featurize_csr(token_seqs, vocab, idf)
    return [batch.row(r) for r in range(len(batch))]
