"""The lexical-dense network: sparse first layer + small dense MLP.

A model is a vocabulary, its IDF weights, and a stack of linear layers.
Hidden layers apply ReLU then L2 normalization after the projection; the
final layer only L2-normalizes.  There are no bias terms: every projection
is immediately length-normalized, and the sparse matvec identity in the
first layer is stated bias-free.

A loaded model is immutable and shareable across threads.  The embedding
paths run on fixed-order kernels, so ``embed`` of a single document,
``embed_batch`` of any batch containing it, and parallel execution all agree
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _binio, _kernels
from .corpus_io import Document, EmbeddingMatrix
from .errors import ConfigError, FormatError
from .featurizer import SparseBatch, SparseVector, featurize_csr
from .tokenizer import TOKENIZER_ID, get_tokenizer, tokenize_batch
from .vocab import IDF_FORMULA, NgramVocab

MAGIC_MODEL = b"LUXM"

ACT_RELU_L2NORM = "relu_then_l2norm"
ACT_L2NORM = "l2norm_only"
_ACT_TO_TAG = {ACT_RELU_L2NORM: 0, ACT_L2NORM: 1}
_TAG_TO_ACT = {tag: name for name, tag in _ACT_TO_TAG.items()}

# Norms at or below this are treated as zero (the zero-vector guard).
NORM_EPS = 1e-12

_EMBED_CHUNK = 4096


@dataclass(eq=False)
class LayerWeights:
    """One linear layer: (d_out, d_in) float32 weights plus its activation."""

    weights: np.ndarray
    activation: str

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise ValueError(f"weights must be a non-empty 2-D matrix, got {self.weights.shape}")
        if self.activation not in _ACT_TO_TAG:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not np.isfinite(self.weights).all():
            raise ValueError("layer weights contain non-finite values")

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]


@dataclass(eq=False)
class LexicalDenseModel:
    """Vocabulary + IDF + layer stack; the complete embedding model."""

    vocab: NgramVocab
    idf: np.ndarray
    layers: list[LayerWeights]
    tokenizer_id: str = TOKENIZER_ID
    idf_formula: str = IDF_FORMULA

    def __post_init__(self) -> None:
        self.idf = np.ascontiguousarray(self.idf, dtype=np.float32)
        if self.idf.ndim != 1 or self.idf.shape[0] != self.vocab.size:
            raise ValueError(
                f"idf has shape {self.idf.shape} but vocabulary size is {self.vocab.size}"
            )
        if not np.isfinite(self.idf).all() or (self.idf < 0).any():
            raise ValueError("idf weights must be finite and non-negative")
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[0].d_in != self.vocab.size:
            raise ValueError(
                f"first layer d_in {self.layers[0].d_in} != vocabulary size {self.vocab.size}"
            )
        for k in range(len(self.layers) - 1):
            if self.layers[k].d_out != self.layers[k + 1].d_in:
                raise ValueError(
                    f"layer {k} d_out {self.layers[k].d_out} != layer {k + 1} "
                    f"d_in {self.layers[k + 1].d_in}"
                )
        for k, layer in enumerate(self.layers[:-1]):
            if layer.activation != ACT_RELU_L2NORM:
                raise ValueError(f"hidden layer {k} must use {ACT_RELU_L2NORM}")
        if self.layers[-1].activation != ACT_L2NORM:
            raise ValueError(f"final layer must use {ACT_L2NORM}")
        self._input_table: np.ndarray | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.vocab.size,) + tuple(layer.d_out for layer in self.layers)

    @property
    def out_dim(self) -> int:
        return self.layers[-1].d_out

    @property
    def input_table(self) -> np.ndarray:
        """First-layer weights transposed to (V, d0) so the sparse gather
        reads contiguous rows.  Built lazily; the transpose is exact."""
        if self._input_table is None:
            self._input_table = np.ascontiguousarray(self.layers[0].weights.T)
        return self._input_table


def init_model(
    vocab: NgramVocab,
    idf: np.ndarray,
    dims: Sequence[int] = (92, 3072, 3072, 192),
    seed: int = 0,
    tokenizer_id: str | None = None,
) -> LexicalDenseModel:
    """Random model with the given layer widths after the vocabulary.

    Weights are uniform in +-sqrt(6 / (d_in + d_out)) per layer, drawn from
    a seeded generator layer by layer, so initialization is reproducible.
    """
    if not dims:
        raise ConfigError("dims must list at least the output width")
    rng = np.random.default_rng(seed)
    widths = [vocab.size, *dims]
    layers = []
    for k in range(len(widths) - 1):
        d_in, d_out = widths[k], widths[k + 1]
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights = rng.uniform(-bound, bound, size=(d_out, d_in)).astype(np.float32)
        activation = ACT_L2NORM if k == len(widths) - 2 else ACT_RELU_L2NORM
        layers.append(LayerWeights(weights=weights, activation=activation))
    return LexicalDenseModel(
        vocab=vocab,
        idf=idf,
        layers=layers,
        tokenizer_id=tokenizer_id if tokenizer_id is not None else vocab.tokenizer_id,
    )


def normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise L2 normalization with the zero-norm guard.

    Returns (normalized, float64 row norms).  Rows with norm at most
    NORM_EPS come back exactly zero.  Norms accumulate in float64 so the
    result of normalizing a row is independent of which batch it sits in.
    """
    norms = np.sqrt(np.sum(x.astype(np.float64) ** 2, axis=-1))
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    out = (x / safe[..., None]).astype(x.dtype)
    out[norms <= NORM_EPS] = 0
    return out, norms


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||_2, or the zero vector when the norm is at most NORM_EPS.

    Works on a single vector or row-wise on a matrix; the single-vector
    result is bit-identical to the corresponding row of the batched form.
    """
    v = np.asarray(v)
    if v.ndim == 1:
        return normalize_rows(v[None, :])[0][0]
    return normalize_rows(v)[0]


def apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == ACT_RELU_L2NORM:
        z = np.maximum(z, 0)
    elif activation != ACT_L2NORM:
        raise ValueError(f"unknown activation {activation!r}")
    return normalize_rows(z)[0]


def sparse_dense_matvec(layer: LayerWeights, vec: SparseVector) -> np.ndarray:
    """W @ s computed as sum over the columns hit by nonzero entries.

    Gathers and scales only the touched columns, accumulating in ascending
    support order; equals the dense matvec up to float32 rounding.
    """
    if layer.d_in != vec.dim:
        raise ConfigError(f"layer expects dim {layer.d_in}, sparse vector has dim {vec.dim}")
    return _kernels.gather_scaled_cols(
        layer.weights, vec.indices.astype(np.int64), vec.values
    )


def forward_sparse_batch(model: LexicalDenseModel, batch: SparseBatch) -> np.ndarray:
    """Run the network on featurized rows; returns (n, out_dim) float32.

    Empty rows propagate to exactly-zero embeddings: the empty gather is the
    zero vector and both ReLU and the guarded normalization keep it zero.
    """
    if batch.dim != model.vocab.size:
        raise ConfigError(f"batch dim {batch.dim} != vocabulary size {model.vocab.size}")
    x = _kernels.gather_scaled_rows(
        model.input_table, batch.indices, batch.values, batch.offsets
    )
    x = apply_activation(x, model.layers[0].activation)
    for layer in model.layers[1:]:
        x = apply_activation(_kernels.matmul_wt(x, layer.weights), layer.activation)
    return x


def embed_batch(
    model: LexicalDenseModel,
    docs: Sequence[Document],
    workers: int = 1,
    chunk_size: int = _EMBED_CHUNK,
) -> EmbeddingMatrix:
    """Embed documents; row r corresponds to docs[r].

    Tokenization, featurization, and the network run chunk by chunk; rows
    are elementwise equal to :func:`embed` on each document alone.
    """
    get_tokenizer(model.tokenizer_id)  # refuse unknown tokenizers up front
    n = len(docs)
    out = np.empty((n, model.out_dim), dtype=np.float32)
    ids = [doc.id for doc in docs]
    for lo in range(0, n, chunk_size):
        chunk = docs[lo : lo + chunk_size]
        token_seqs = tokenize_batch(
            [doc.text for doc in chunk], workers=workers, tokenizer_id=model.tokenizer_id
        )
        batch = featurize_csr(token_seqs, model.vocab, model.idf)
        out[lo : lo + len(chunk)] = forward_sparse_batch(model, batch)
    return EmbeddingMatrix(ids=ids, values=out)


def embed(model: LexicalDenseModel, doc: Document) -> np.ndarray:
    """Dense embedding of one document: unit norm, or all-zero when the
    document matches no vocabulary ngram (e.g. empty text)."""
    return embed_batch(model, [doc]).values[0]


def save_model(path, model: LexicalDenseModel) -> None:
    """Write the LUXM model file (bit-exact round-trip).

    Layout: magic, version u32, tokenizer id, IDF formula tag, max_n u32,
    V u64, V records of (key, count u64), V float32 idf weights, layer count
    u32, then per layer d_out u32, d_in u32, activation tag u8, and the
    float32 row-major weights.
    """
    keys = model.vocab.keys_in_index_order()
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_MODEL)
        _binio.write_str(fh, model.tokenizer_id)
        _binio.write_str(fh, model.idf_formula)
        _binio.write_u32(fh, model.vocab.max_n)
        _binio.write_u64(fh, model.vocab.size)
        for key, count in zip(keys, model.vocab.est_counts):
            _binio.write_str(fh, key)
            _binio.write_u64(fh, int(count))
        _binio.write_f32_array(fh, model.idf)
        _binio.write_u32(fh, len(model.layers))
        for layer in model.layers:
            _binio.write_u32(fh, layer.d_out)
            _binio.write_u32(fh, layer.d_in)
            fh.write(bytes([_ACT_TO_TAG[layer.activation]]))
            _binio.write_f32_array(fh, layer.weights)


def load_model(path) -> LexicalDenseModel:
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_MODEL)
        tokenizer_id = _binio.read_str(fh)
        idf_formula = _binio.read_str(fh)
        max_n = _binio.read_u32(fh)
        size = _binio.read_u64(fh)
        entries: dict[str, int] = {}
        counts = np.empty(size, dtype=np.uint64)
        for i in range(size):
            key = _binio.read_str(fh)
            entries[key] = i
            counts[i] = _binio.read_u64(fh)
        idf = _binio.read_f32_array(fh, (size,))
        n_layers = _binio.read_u32(fh)
        layers = []
        for _ in range(n_layers):
            d_out = _binio.read_u32(fh)
            d_in = _binio.read_u32(fh)
            tag = _binio.read_exact(fh, 1)[0]
            if tag not in _TAG_TO_ACT:
                raise FormatError(f"{path}: unknown activation tag {tag}")
            weights = _binio.read_f32_array(fh, (d_out, d_in))
            layers.append(LayerWeights(weights=weights, activation=_TAG_TO_ACT[tag]))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    try:
        vocab = NgramVocab(
            entries=entries,
            est_counts=counts,
            max_n=max_n,
            tokenizer_id=tokenizer_id,
            total_ngrams=0,
        )
        return LexicalDenseModel(
            vocab=vocab,
            idf=idf,
            layers=layers,
            tokenizer_id=tokenizer_id,
            idf_formula=idf_formula,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: inconsistent model file: {exc}") from None
