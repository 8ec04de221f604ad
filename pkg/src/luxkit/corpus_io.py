"""Corpus streaming and the LUXE / LUXS binary files.

The corpus interchange format is newline-delimited JSON with string fields
``id`` and ``text``.  The reader is a constant-memory generator: it never
buffers more than one line, so corpora far larger than RAM stream fine.

Binary formats (all little-endian, see ``_binio``):

* ``LUXE`` embeddings: magic, version u32, n u64, d u32, n length-prefixed
  ids, then n*d float32 row-major values.
* ``LUXS`` scores: magic, version u32, n u64, n length-prefixed ids, then
  n float32 scores.

Both round-trip bit-exactly, including row order and ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _binio
from .errors import DataError, FormatError

MAGIC_EMBEDDINGS = b"LUXE"
MAGIC_SCORES = b"LUXS"

# Row-norm tolerance for the unit-or-zero embedding invariant.
ROW_NORM_TOL = 1e-4


@dataclass(frozen=True)
class Document:
    """One corpus record: a unique id and a UTF-8 text body (may be empty)."""

    id: str
    text: str


def read_corpus(path, limit: int | None = None) -> Iterator[Document]:
    """Stream documents from a newline-delimited JSON file.

    Yields documents in file order, stopping after ``limit`` if given.
    Memory use is constant in the corpus size.  Malformed lines raise
    :class:`DataError` naming the 1-based line number; a record missing
    ``id`` or ``text`` raises naming the field.  Invalid UTF-8 is rejected
    here rather than deeper in the pipeline.
    """
    if limit is not None and limit <= 0:
        return
    count = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue  # blank / trailing newline lines carry no record
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DataError(f"invalid UTF-8 at line {lineno}: {exc}") from None
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed record at line {lineno}: {exc.msg}") from None
            if not isinstance(record, dict):
                raise DataError(f"malformed record at line {lineno}: not a JSON object")
            for fieldname in ("id", "text"):
                if fieldname not in record:
                    raise DataError(f"line {lineno}: missing field {fieldname!r}")
                if not isinstance(record[fieldname], str):
                    raise DataError(f"line {lineno}: field {fieldname!r} is not a string")
            yield Document(id=record["id"], text=record["text"])
            count += 1
            if limit is not None and count >= limit:
                return


def write_corpus(path, docs: Sequence[Document]) -> None:
    """Write documents as newline-delimited JSON (the inverse of read_corpus)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.id, "text": doc.text}, ensure_ascii=False))
            fh.write("\n")


@dataclass
class EmbeddingMatrix:
    """A row-major batch of dense embeddings aligned with document ids.

    Every row is either unit-norm (within ``ROW_NORM_TOL``) or exactly
    all-zero; the zero row is the sentinel for documents that matched no
    vocabulary ngram.
    """

    ids: list[str]
    values: np.ndarray  # (n, d) float32

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if len(self.ids) != self.values.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids but {self.values.shape[0]} embedding rows"
            )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values.astype(np.float64), axis=1)

    def validate_rows(self) -> None:
        """Check the unit-or-zero row invariant."""
        norms = self.row_norms()
        bad = ~((np.abs(norms - 1.0) <= ROW_NORM_TOL) | (norms == 0.0))
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(
                f"row {i} (id {self.ids[i]!r}) has norm {norms[i]:.6f}, "
                "expected 1 within tolerance or exactly zero"
            )


def write_embeddings(path, matrix: EmbeddingMatrix) -> None:
    matrix.validate_rows()
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_EMBEDDINGS)
        _binio.write_u64(fh, matrix.n)
        _binio.write_u32(fh, matrix.dim)
        for doc_id in matrix.ids:
            _binio.write_str(fh, doc_id)
        _binio.write_f32_array(fh, matrix.values)


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_EMBEDDINGS)
        n = _binio.read_u64(fh)
        d = _binio.read_u32(fh)
        ids = [_binio.read_str(fh) for _ in range(n)]
        values = _binio.read_f32_array(fh, (n, d))
        _expect_eof(fh, path)
    return EmbeddingMatrix(ids=ids, values=values)


def write_scores(path, ids: Sequence[str], scores: np.ndarray) -> None:
    scores = np.asarray(scores, dtype=np.float32)
    if scores.ndim != 1 or len(ids) != scores.shape[0]:
        raise ValueError("ids and scores must be 1-D and the same length")
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_SCORES)
        _binio.write_u64(fh, len(ids))
        for doc_id in ids:
            _binio.write_str(fh, doc_id)
        _binio.write_f32_array(fh, scores)


def read_scores(path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_SCORES)
        n = _binio.read_u64(fh)
        ids = [_binio.read_str(fh) for _ in range(n)]
        scores = _binio.read_f32_array(fh, (n,))
        _expect_eof(fh, path)
    return ids, scores


def _expect_eof(fh, path) -> None:
    if fh.read(1):
        raise FormatError(f"{path}: trailing bytes after payload")
