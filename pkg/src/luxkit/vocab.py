"""Ngram vocabulary mining and IDF derivation.

One streaming pass feeds every ngram of orders 1..max_n through a single
Space-Saving sketch; the top ``target_size`` items become the fixed
vocabulary, with indices assigned in descending-count order (ties broken by
ascending key).  The sketch's estimated counts double as the collection
frequencies behind a smoothed log-scaled IDF vector:

    idf[i] = ln((1 + T) / (1 + c_i))

where T is the total number of ngrams streamed and c_i the estimated count,
so weights are always finite and non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import _binio
from .corpus_io import Document
from .errors import ConfigError, DataError, FormatError
from .sketch import SpaceSavingSketch
from .tokenizer import TOKENIZER_ID, get_tokenizer

MAGIC_VOCAB = b"LUXV"

# Tokens inside an ngram key are joined by the 0x1F unit separator, which the
# tokenizer guarantees never appears inside a token.
NGRAM_SEP = "\x1f"

IDF_FORMULA = "ln((1+total)/(1+count))"


def iter_ngrams(tokens: list[str], max_n: int) -> Iterator[str]:
    """Yield all contiguous ngram keys of orders 1..max_n.

    All 1-grams in positional order, then all 2-grams, and so on; a sequence
    of L tokens yields sum over n of max(0, L - n + 1) keys.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    yield from tokens
    length = len(tokens)
    for n in range(2, max_n + 1):
        for i in range(length - n + 1):
            yield NGRAM_SEP.join(tokens[i : i + n])


@dataclass(eq=False)
class NgramVocab:
    """Exact ngram -> index map with estimated collection frequencies.

    ``entries`` is a bijection onto [0, V).  ``est_counts[i]`` is the
    sketch's estimate for the ngram with index i (always >= 1).
    ``total_ngrams`` is the stream length T behind those estimates; it is 0
    for vocabularies loaded from a LUXV dump, which does not persist it.
    """

    entries: dict[str, int]
    est_counts: np.ndarray  # (V,) uint64
    max_n: int
    tokenizer_id: str = TOKENIZER_ID
    total_ngrams: int = 0

    def __post_init__(self) -> None:
        self.est_counts = np.asarray(self.est_counts, dtype=np.uint64)
        if len(self.entries) != self.est_counts.shape[0]:
            raise ValueError("entries and est_counts disagree on vocabulary size")
        if len(self.entries) == 0:
            raise ValueError("vocabulary must not be empty")
        indices = sorted(self.entries.values())
        if indices != list(range(len(self.entries))):
            raise ValueError("entry indices are not a bijection onto [0, V)")
        if (self.est_counts < 1).any():
            raise ValueError("every estimated count must be >= 1")

    @property
    def size(self) -> int:
        return len(self.entries)

    def keys_in_index_order(self) -> list[str]:
        out: list[str] = [""] * self.size
        for key, idx in self.entries.items():
            out[idx] = key
        return out


def mine_vocab(
    docs: Iterable[Document],
    target_size: int,
    max_n: int = 5,
    capacity: int | None = None,
    tokenizer_id: str = TOKENIZER_ID,
) -> NgramVocab:
    """Stream a corpus once and keep the ~most frequent ngrams.

    ``capacity`` is the Space-Saving budget; the default 4x headroom over
    ``target_size`` sharpens top-V accuracy.  Indices are assigned in
    descending estimated-count order with ties broken by ascending key, so
    the result is a deterministic function of corpus and parameters.

    Raises :class:`DataError` when the corpus yields no ngrams at all.
    """
    if target_size < 1:
        raise ConfigError(f"target_size must be >= 1, got {target_size}")
    if max_n < 1:
        raise ConfigError(f"max_n must be >= 1, got {max_n}")
    if capacity is None:
        capacity = 4 * target_size
    if capacity < target_size:
        raise ConfigError(
            f"sketch capacity {capacity} is below target vocabulary size {target_size}"
        )
    tokenize = get_tokenizer(tokenizer_id)
    sketch = SpaceSavingSketch(capacity)
    update = sketch.update
    for doc in docs:
        tokens = tokenize(doc.text)
        for key in iter_ngrams(tokens, max_n):
            update(key)
    if sketch.total == 0:
        raise DataError("corpus produced no ngrams; cannot mine a vocabulary")
    top = sketch.top_k(target_size)
    entries = {key: i for i, (key, _, _) in enumerate(top)}
    est_counts = np.array([cnt for _, cnt, _ in top], dtype=np.uint64)
    return NgramVocab(
        entries=entries,
        est_counts=est_counts,
        max_n=max_n,
        tokenizer_id=tokenizer_id,
        total_ngrams=sketch.total,
    )


def compute_idf(vocab: NgramVocab) -> np.ndarray:
    """Log-scaled IDF weights, one per vocabulary index.

    weights[i] = ln((1 + T) / (1 + c_i)); non-negative because c_i <= T.
    """
    total = vocab.total_ngrams
    if total <= 0:
        raise ConfigError(
            "vocabulary carries no stream total (loaded from a dump?); "
            "IDF weights require the mining-time total ngram count"
        )
    counts = vocab.est_counts.astype(np.float64)
    if counts.max() > total:
        raise ConfigError("estimated counts exceed the stream total; vocabulary is inconsistent")
    weights = np.log((1.0 + total) / (1.0 + counts))
    return weights.astype(np.float32)


def save_vocab_dump(path, vocab: NgramVocab) -> None:
    """Write the standalone LUXV inspection dump.

    Layout: magic, version u32, V u64, max_n u32, tokenizer id, then V
    records of (length-prefixed key, count u64) in index order.
    """
    keys = vocab.keys_in_index_order()
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_VOCAB)
        _binio.write_u64(fh, vocab.size)
        _binio.write_u32(fh, vocab.max_n)
        _binio.write_str(fh, vocab.tokenizer_id)
        for key, count in zip(keys, vocab.est_counts):
            _binio.write_str(fh, key)
            _binio.write_u64(fh, int(count))


def load_vocab_dump(path) -> NgramVocab:
    """Read a LUXV dump.  The mining-time stream total is not persisted,
    so the loaded vocabulary reports ``total_ngrams == 0``."""
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_VOCAB)
        size = _binio.read_u64(fh)
        max_n = _binio.read_u32(fh)
        tokenizer_id = _binio.read_str(fh)
        entries: dict[str, int] = {}
        counts = np.empty(size, dtype=np.uint64)
        for i in range(size):
            key = _binio.read_str(fh)
            entries[key] = i
            counts[i] = _binio.read_u64(fh)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    return NgramVocab(
        entries=entries,
        est_counts=counts,
        max_n=max_n,
        tokenizer_id=tokenizer_id,
        total_ngrams=0,
    )
