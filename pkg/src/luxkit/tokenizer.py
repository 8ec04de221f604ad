"""Deterministic rule-based text tokenization.

The built-in tokenizer ("simple-v1") lowercases, applies NFKC normalization,
then emits maximal alphanumeric runs as tokens and every surviving
punctuation/symbol character as its own single-character token.  Whitespace
and control/format characters are discarded, which guarantees that no token
ever contains the 0x1F byte reserved as the ngram key separator.

Tokenizers are pluggable through a registry keyed by a tokenizer id string;
the id is recorded in model files so that a model is never driven by a
tokenizer other than the one its vocabulary was mined with.
"""

from __future__ import annotations

import re
import unicodedata
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

from .errors import ConfigError

TOKENIZER_ID = "simple-v1"

# Maximal alphanumeric runs (\w minus underscore), then any single non-word
# non-space character, then underscore itself (excluded from \w runs because
# it is punctuation, not alphanumeric).
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


def tokenize(text: str) -> list[str]:
    """Tokenize one text deterministically.

    Pipeline: lowercase, NFKC-normalize, then split into alphanumeric runs
    and punctuation singletons.  Control and format characters (Unicode
    category C*) are dropped so the 0x1F ngram separator can never leak into
    a token.  Total function: empty text gives an empty list.
    """
    normalized = unicodedata.normalize("NFKC", text.lower())
    out = []
    for tok in _TOKEN_RE.findall(normalized):
        if len(tok) == 1 and not tok.isalnum():
            o = ord(tok)
            if o < 0x20 or 0x7F <= o < 0xA0:
                continue  # ASCII / Latin-1 controls
            if o > 0x7F and unicodedata.category(tok)[0] == "C":
                continue  # other control / format / surrogate chars
        out.append(tok)
    return out


def _tokenize_chunk(texts: Sequence[str]) -> list[list[str]]:
    return [tokenize(t) for t in texts]


def tokenize_batch(
    texts: Sequence[str], workers: int = 1, tokenizer_id: str = TOKENIZER_ID
) -> list[list[str]]:
    """Tokenize a batch; elementwise identical to mapping the tokenizer.

    With ``workers > 1`` the batch is split into contiguous chunks processed
    by a process pool (tokenization is pure Python, so threads would not
    help).  Output order always matches input order exactly.  Only the
    built-in tokenizer runs in worker processes; plugged-in tokenizers fall
    back to the sequential path because workers cannot see the registry.
    """
    fn = get_tokenizer(tokenizer_id)
    if workers <= 1 or len(texts) < 256 or tokenizer_id != TOKENIZER_ID:
        return [fn(t) for t in texts]
    chunk = max(64, (len(texts) + workers * 4 - 1) // (workers * 4))
    chunks = [texts[i : i + chunk] for i in range(0, len(texts), chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_tokenize_chunk, chunks))
    return [seq for part in results for seq in part]


_REGISTRY: dict[str, Callable[[str], list[str]]] = {TOKENIZER_ID: tokenize}


def register_tokenizer(tokenizer_id: str, fn: Callable[[str], list[str]]) -> None:
    """Register a replacement tokenizer under a new id.

    Vocabulary indices are meaningless under a different tokenizer, so models
    record the id they were built with and refuse to run under any other.
    """
    _REGISTRY[tokenizer_id] = fn


def get_tokenizer(tokenizer_id: str) -> Callable[[str], list[str]]:
    try:
        return _REGISTRY[tokenizer_id]
    except KeyError:
        raise ConfigError(
            f"unknown tokenizer id {tokenizer_id!r}; registered: {sorted(_REGISTRY)}"
        ) from None
