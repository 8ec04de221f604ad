"""Shared test utilities: synthetic corpora, reference oracles."""

from __future__ import annotations

from collections import Counter

import numpy as np

from luxkit import Document, EmbeddingMatrix, NgramVocab
from luxkit.vocab import NGRAM_SEP, iter_ngrams


def make_topic_corpus(
    n_docs: int,
    n_topics: int = 20,
    lexicon_size: int = 5000,
    doc_tokens: tuple[int, int] = (100, 300),
    zipf_exponent: float = 1.2,
    doc_concentration: float | None = 60.0,
    seed: int = 0,
) -> tuple[list[Document], np.ndarray]:
    """Documents sampled from topic-specific unigram distributions.

    Each topic is a seeded permutation of the shared lexicon with Zipf
    weights over the permuted order, so topics share tokens but with very
    different frequencies.  With ``doc_concentration`` set, each document
    draws its own unigram distribution from a Dirichlet centered on its
    topic's distribution (the usual hierarchical topic model), which gives
    documents the within-doc lexical cohesion real web documents have;
    ``None`` samples tokens iid from the topic distribution instead.
    Returns (documents, topic id per document).
    """
    rng = np.random.default_rng(seed)
    lexicon = np.array([f"tok{i:05d}" for i in range(lexicon_size)])
    base = 1.0 / np.arange(1, lexicon_size + 1) ** zipf_exponent
    base /= base.sum()
    topic_probs = np.empty((n_topics, lexicon_size))
    for t in range(n_topics):
        perm = rng.permutation(lexicon_size)
        topic_probs[t, perm] = base

    topics = rng.integers(0, n_topics, size=n_docs)
    lengths = rng.integers(doc_tokens[0], doc_tokens[1] + 1, size=n_docs)
    docs = []
    for i in range(n_docs):
        probs = topic_probs[topics[i]]
        if doc_concentration is not None:
            tilt = rng.gamma(np.maximum(doc_concentration * probs, 1e-9))
            total = tilt.sum()
            probs = tilt / total if total > 0 else probs
        cdf = np.cumsum(probs)
        token_ids = np.searchsorted(cdf, rng.random(lengths[i]))
        token_ids = np.minimum(token_ids, lexicon_size - 1)
        docs.append(Document(id=f"doc{i:06d}", text=" ".join(lexicon[token_ids])))
    return docs, topics


def teacher_for_topics(
    doc_ids: list[str],
    topics: np.ndarray,
    dim: int = 24,
    noise: float = 0.05,
    seed: int = 0,
) -> EmbeddingMatrix:
    """Teacher rows: unit-normalized one-hot topic vectors plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    n = len(doc_ids)
    values = rng.normal(0.0, noise, size=(n, dim))
    values[np.arange(n), topics] += 1.0
    values /= np.linalg.norm(values, axis=1, keepdims=True)
    return EmbeddingMatrix(ids=list(doc_ids), values=values.astype(np.float32))


def featurize_oracle(tokens: list[str], vocab: NgramVocab, idf: np.ndarray):
    """Independent TF-IDF reference: Counter over string ngram keys.

    Returns (indices, values) as float64 without the production code path.
    """
    counts = Counter(iter_ngrams(tokens, vocab.max_n))
    hits = {}
    for key, count in counts.items():
        idx = vocab.entries.get(key)
        if idx is not None:
            hits[idx] = count
    if not hits:
        return np.empty(0, dtype=np.int64), np.empty(0)
    idx = np.array(sorted(hits), dtype=np.int64)
    raw = np.array([hits[i] for i in idx], dtype=np.float64) * idf[idx].astype(np.float64)
    idx = idx[raw > 0]
    raw = raw[raw > 0]
    if raw.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return idx, raw / np.linalg.norm(raw)


def random_token_docs(n_docs: int, vocab_tokens: list[str], seed: int = 0, max_len: int = 40):
    """Random word-salad documents over a fixed token set (plus some noise tokens)."""
    rng = np.random.default_rng(seed)
    pool = list(vocab_tokens) + ["zz", "qq", "xx"]
    docs = []
    for i in range(n_docs):
        length = int(rng.integers(0, max_len))
        words = [pool[int(rng.integers(0, len(pool)))] for _ in range(length)]
        docs.append(Document(id=f"r{i:05d}", text=" ".join(words)))
    return docs


def build_vocab(entries: dict[str, int], counts, max_n: int, total: int) -> NgramVocab:
    return NgramVocab(
        entries=dict(entries),
        est_counts=np.asarray(counts, dtype=np.uint64),
        max_n=max_n,
        total_ngrams=total,
    )


def sep(*tokens: str) -> str:
    """Join tokens with the reserved ngram separator."""
    return NGRAM_SEP.join(tokens)
