"""Gram-matrix distillation training.

For a batch of n documents with unit-norm student embeddings S (n x d) and
teacher embeddings T (n x d_t), both Gram matrices S S^T and T T^T are
formed, their diagonals are excluded (each row's softmax runs over the n-1
off-diagonal similarities), similarities are divided by the temperature, and
the loss is

    temperature^2 * mean over rows of KL(teacher row || student row).

The gradient flows analytically through the softmax, the Gram product, the
final normalization, every ReLU + L2-norm layer, and into the sparse first
layer, where only the columns in the batch's union support receive gradient.
Adam is lazy on that first layer: moment state for untouched columns is not
advanced, which is what keeps huge vocabularies trainable.

Training computes in float32; TrainState can be built in float64 as a shadow
mode for the finite-difference gradient checks.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _binio, _kernels
from .corpus_io import Document, EmbeddingMatrix
from .errors import ConfigError, DataError, FormatError
from .featurizer import SparseBatch, featurize_csr
from .model import (
    ACT_RELU_L2NORM,
    NORM_EPS,
    LayerWeights,
    LexicalDenseModel,
    normalize_rows,
)
from .tokenizer import tokenize_batch

MAGIC_OPTIMIZER = b"LUXO"


@dataclass
class TrainConfig:
    """Hyperparameters of a distillation run.

    Defaults follow the reference configuration: batch 3072, temperature 3,
    peak learning rate 0.01, 5% linear warmup, 10% linear decay to zero,
    three epochs with reshuffling.
    """

    batch_size: int = 3072
    temperature: float = 3.0
    peak_lr: float = 0.01
    warmup_frac: float = 0.05
    decay_frac: float = 0.10
    epochs: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # False trains against KL(teacher || student); True flips the arguments.
    reverse_kl: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (0.0 <= self.warmup_frac and 0.0 <= self.decay_frac):
            raise ConfigError("warmup_frac and decay_frac must be non-negative")
        if self.warmup_frac + self.decay_frac > 1.0:
            raise ConfigError("warmup_frac + decay_frac must not exceed 1")


def wsd_lr(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Warmup-stable-decay learning rate at a given step.

    Linear 0 -> peak over ceil(warmup_frac * total) steps, constant peak in
    the middle, then linear peak -> 0 over the final ceil(decay_frac * total)
    steps, hitting exactly 0 at the step boundary after the last step.
    """
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    warmup = math.ceil(cfg.warmup_frac * total_steps)
    decay = math.ceil(cfg.decay_frac * total_steps)
    lr = cfg.peak_lr
    if step < warmup:
        lr = cfg.peak_lr * (step + 1) / warmup
    if decay > 0 and step >= total_steps - decay:
        lr = min(lr, cfg.peak_lr * (total_steps - step) / decay)
    return lr


def gram(embeddings) -> np.ndarray:
    """G = E E^T; with unit-norm rows the entries are cosine similarities."""
    values = embeddings.values if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    return values @ values.T


def _masked_log_softmax(logits: np.ndarray):
    """Row softmax over off-diagonal entries only.

    Returns (log_p, p) where the diagonal of p is exactly 0 and the diagonal
    of log_p is zeroed so diagonal terms drop out of any p * log expression.
    """
    x = logits.copy()
    np.fill_diagonal(x, -np.inf)
    m = np.max(x, axis=1, keepdims=True)
    e = np.exp(x - m)
    s = np.sum(e, axis=1, keepdims=True)
    p = e / s
    log_p = (x - m) - np.log(s)
    np.fill_diagonal(log_p, 0.0)
    return log_p, p


def distill_loss(
    student: np.ndarray,
    teacher: np.ndarray,
    temperature: float,
    reverse_kl: bool = False,
) -> tuple[float, np.ndarray]:
    """Temperature-scaled Gram-matrix KL loss and its gradient w.r.t. S.

    Per row, the n-1 off-diagonal similarities are divided by the
    temperature and soft-maxed; the loss is temperature^2 times the row mean
    of KL(teacher || student) (or the reverse when ``reverse_kl``).  The
    returned gradient is d loss / d S with S entering through G_s = S S^T.
    """
    S = np.asarray(student)
    T = np.asarray(teacher)
    n = S.shape[0]
    if n < 2:
        raise ConfigError(f"need at least 2 rows for off-diagonal structure, got {n}")
    if T.shape[0] != n:
        raise ConfigError(f"student has {n} rows but teacher has {T.shape[0]}")
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    log_ps, p_s = _masked_log_softmax((S @ S.T) / S.dtype.type(temperature))
    log_pt, p_t = _masked_log_softmax((T @ T.T) / T.dtype.type(temperature))
    if reverse_kl:
        ratio = log_ps - log_pt
        rows = np.sum(p_s * ratio, axis=1)
        d_logit = p_s * (ratio - rows[:, None])
        np.fill_diagonal(d_logit, 0.0)
    else:
        rows = np.sum(p_t * (log_pt - log_ps), axis=1)
        d_logit = p_s - p_t
    coef = temperature / n  # tau^2/n from the loss, times 1/tau from logits = G/tau
    d_gram = (coef * (d_logit + d_logit.T)).astype(S.dtype)
    grad = d_gram @ S
    loss = float(temperature * temperature * np.mean(rows))
    return loss, grad


def adam_step_dense(w, g, m, v, lr, beta1, beta2, eps, t) -> None:
    """One in-place Adam update of a dense parameter tensor."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    w -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step_rows(w, rows, g, m, v, lr, beta1, beta2, eps, t) -> None:
    """Lazy Adam on the given rows only; all other rows stay bit-unchanged.

    Bias correction uses the global step count, but moments of untouched
    rows are simply not advanced.
    """
    mr = beta1 * m[rows] + (1.0 - beta1) * g
    vr = beta2 * v[rows] + (1.0 - beta2) * (g * g)
    m[rows] = mr
    v[rows] = vr
    m_hat = mr / (1.0 - beta1**t)
    v_hat = vr / (1.0 - beta2**t)
    w[rows] -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class _LayerCache:
    z: np.ndarray  # pre-activation
    a: np.ndarray  # post relu + l2norm (or l2norm only)
    norms: np.ndarray  # float64 row norms of the normalized input


class TrainState:
    """Mutable training state: parameter arrays plus Adam moments.

    The first layer is held transposed as a (V, d0) table so gradients and
    updates address touched rows directly.  ``dtype`` selects float32
    training or the float64 shadow mode used by gradient checks.
    """

    def __init__(self, model: LexicalDenseModel, dtype=np.float32):
        self.vocab = model.vocab
        self.idf = model.idf
        self.tokenizer_id = model.tokenizer_id
        self.idf_formula = model.idf_formula
        self.activations = [layer.activation for layer in model.layers]
        self.dtype = np.dtype(dtype).type
        self.input_table = np.ascontiguousarray(model.layers[0].weights.T, dtype=dtype)
        self.dense = [np.array(l.weights, dtype=dtype) for l in model.layers[1:]]
        self.adam_m = [np.zeros_like(p) for p in self.params()]
        self.adam_v = [np.zeros_like(p) for p in self.params()]
        self.adam_steps = 0
        self.dropped_docs = 0
        self.skipped_steps = 0

    def params(self) -> list[np.ndarray]:
        return [self.input_table, *self.dense]

    def to_model(self) -> LexicalDenseModel:
        layers = [
            LayerWeights(
                weights=np.ascontiguousarray(self.input_table.T, dtype=np.float32),
                activation=self.activations[0],
            )
        ]
        for w, act in zip(self.dense, self.activations[1:]):
            layers.append(LayerWeights(weights=w.astype(np.float32), activation=act))
        return LexicalDenseModel(
            vocab=self.vocab,
            idf=self.idf,
            layers=layers,
            tokenizer_id=self.tokenizer_id,
            idf_formula=self.idf_formula,
        )


def _featurize_and_drop(state: TrainState, docs: Sequence[Document]):
    """Featurize a batch and drop documents with empty sparse vectors.

    Empty rows carry zero flat entries, so dropping them only rewrites the
    offsets.  Returns (batch, keep mask, dropped count).
    """
    token_seqs = tokenize_batch([d.text for d in docs], tokenizer_id=state.tokenizer_id)
    sbatch = featurize_csr(token_seqs, state.vocab, state.idf)
    lengths = np.diff(sbatch.offsets)
    keep = lengths > 0
    dropped = int((~keep).sum())
    if dropped:
        new_offsets = np.zeros(int(keep.sum()) + 1, dtype=np.int64)
        np.cumsum(lengths[keep], out=new_offsets[1:])
        sbatch = SparseBatch(
            dim=sbatch.dim,
            indices=sbatch.indices,
            values=sbatch.values,
            offsets=new_offsets,
        )
    return sbatch, keep, dropped


def _forward_with_cache(state: TrainState, sbatch: SparseBatch):
    values = sbatch.values.astype(state.dtype, copy=False)
    z = _kernels.gather_scaled_rows(state.input_table, sbatch.indices, values, sbatch.offsets)
    caches: list[_LayerCache] = []
    x = z
    for k, activation in enumerate(state.activations):
        if k > 0:
            z = _kernels.matmul_wt(x, state.dense[k - 1])
        r = np.maximum(z, 0) if activation == ACT_RELU_L2NORM else z
        a, norms = normalize_rows(r)
        caches.append(_LayerCache(z=z, a=a, norms=norms))
        x = a
    return x, caches


def network_loss_and_grads(
    state: TrainState,
    sbatch: SparseBatch,
    teacher_rows: np.ndarray,
    temperature: float,
    reverse_kl: bool = False,
):
    """Full forward + analytic backward pass.

    Returns (loss, touched_rows, grad for those input-table rows, dense
    layer grads).  The input-table gradient is sparse by construction: only
    rows in the batch's union support appear.
    """
    student, caches = _forward_with_cache(state, sbatch)
    teacher = np.asarray(teacher_rows, dtype=state.dtype)
    loss, dx = distill_loss(student, teacher, temperature, reverse_kl)

    dense_grads: list[np.ndarray | None] = [None] * len(state.dense)
    dz = None
    for k in reversed(range(len(state.activations))):
        cache = caches[k]
        # through the L2 normalization: project out the radial component
        dot = np.sum(dx * cache.a, axis=-1, keepdims=True)
        safe = np.where(cache.norms > NORM_EPS, cache.norms, 1.0)
        dr = ((dx - dot * cache.a) / safe[:, None]).astype(state.dtype)
        dr[cache.norms <= NORM_EPS] = 0
        if state.activations[k] == ACT_RELU_L2NORM:
            dz = dr * (cache.z > 0)
        else:
            dz = dr
        if k > 0:
            dense_grads[k - 1] = dz.T @ caches[k - 1].a
            dx = dz @ state.dense[k - 1]

    touched = np.unique(sbatch.indices)
    positions = np.searchsorted(touched, sbatch.indices)
    grad_rows = np.zeros((touched.shape[0], state.input_table.shape[1]), dtype=state.dtype)
    values = sbatch.values.astype(state.dtype, copy=False)
    _kernels.scatter_scaled_rows_add(grad_rows, positions, values, sbatch.offsets, dz)
    return loss, touched, grad_rows, dense_grads


@dataclass
class StepResult:
    loss: float | None
    lr: float
    dropped: int
    skipped: bool
    n_docs: int


def train_step(
    state: TrainState,
    docs: Sequence[Document],
    teacher_rows: np.ndarray,
    cfg: TrainConfig,
    step: int,
    total_steps: int,
) -> StepResult:
    """One optimization step: featurize, drop empty documents, backprop, Adam.

    Documents whose sparse vector is empty are removed from the batch (and
    counted) before the loss; if fewer than 2 documents remain the step is
    skipped and counted, leaving all parameters bit-unchanged.
    """
    if len(docs) != np.asarray(teacher_rows).shape[0]:
        raise ConfigError("docs and teacher_rows must align 1:1")
    lr = wsd_lr(step, total_steps, cfg)
    sbatch, keep, dropped = _featurize_and_drop(state, docs)
    state.dropped_docs += dropped
    if len(sbatch) < 2:
        state.skipped_steps += 1
        return StepResult(loss=None, lr=lr, dropped=dropped, skipped=True, n_docs=len(sbatch))
    teacher = np.asarray(teacher_rows)[keep]
    loss, touched, grad_rows, dense_grads = network_loss_and_grads(
        state, sbatch, teacher, cfg.temperature, cfg.reverse_kl
    )
    state.adam_steps += 1
    t = state.adam_steps
    adam_step_rows(
        state.input_table, touched, grad_rows, state.adam_m[0], state.adam_v[0],
        lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, t,
    )
    for i, g in enumerate(dense_grads):
        adam_step_dense(
            state.dense[i], g, state.adam_m[i + 1], state.adam_v[i + 1],
            lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, t,
        )
    return StepResult(loss=loss, lr=lr, dropped=dropped, skipped=False, n_docs=len(sbatch))


def train(
    model: LexicalDenseModel,
    docs: Iterable[Document],
    teacher: EmbeddingMatrix,
    cfg: TrainConfig,
    metrics_path=None,
    checkpoint_dir=None,
) -> tuple[LexicalDenseModel, list[dict]]:
    """Run the full distillation loop; deterministic given cfg.seed.

    Every document id must have a teacher row (checked up front, error names
    the first missing id) and every used teacher row must be unit-norm.
    Documents are reshuffled between epochs.  Returns the trained model and
    the per-step metrics (also written as NDJSON when ``metrics_path`` is
    given).  With ``epochs=0`` the initial model comes back unchanged.
    """
    docs = list(docs)
    if not docs:
        raise DataError("training corpus is empty")
    row_of = {doc_id: i for i, doc_id in enumerate(teacher.ids)}
    for doc in docs:
        if doc.id not in row_of:
            raise DataError(f"missing teacher row for document id {doc.id!r}")
    used = np.array([row_of[d.id] for d in docs], dtype=np.int64)
    norms = np.linalg.norm(teacher.values[used].astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-3)
    if bad.size:
        raise DataError(
            f"teacher row for document id {docs[int(bad[0])].id!r} is not unit-norm "
            f"(norm {norms[int(bad[0])]:.6f})"
        )

    state = TrainState(model)
    n = len(docs)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []
    out = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        step = 0
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.batch_size):
                sel = perm[lo : lo + cfg.batch_size]
                batch_docs = [docs[i] for i in sel]
                teacher_rows = teacher.values[used[sel]]
                result = train_step(state, batch_docs, teacher_rows, cfg, step, total_steps)
                record = {
                    "step": step,
                    "lr": result.lr,
                    "loss": result.loss,
                    "dropped": result.dropped,
                }
                metrics.append(record)
                if out:
                    out.write(json.dumps(record) + "\n")
                step += 1
            if checkpoint_dir:
                from .model import save_model  # local import to avoid cycle at module load

                base = os.path.join(checkpoint_dir, f"checkpoint-epoch{epoch}")
                save_model(base + ".luxm", state.to_model())
                save_optimizer_state(base + ".luxo", state)
    finally:
        if out:
            out.close()
    return state.to_model(), metrics


def save_optimizer_state(path, state: TrainState) -> None:
    """Sidecar LUXO file: Adam step count plus first/second moments.

    Layout: magic, version u32, step u64, tensor count u32, then per tensor
    rows u64, cols u32, float32 m, float32 v.
    """
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_OPTIMIZER)
        _binio.write_u64(fh, state.adam_steps)
        tensors = list(zip(state.adam_m, state.adam_v))
        _binio.write_u32(fh, len(tensors))
        for m, v in tensors:
            _binio.write_u64(fh, m.shape[0])
            _binio.write_u32(fh, m.shape[1])
            _binio.write_f32_array(fh, m)
            _binio.write_f32_array(fh, v)


def load_optimizer_state(path, state: TrainState) -> None:
    """Restore Adam moments saved by :func:`save_optimizer_state` into a
    state with matching tensor shapes."""
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_OPTIMIZER)
        steps = _binio.read_u64(fh)
        count = _binio.read_u32(fh)
        if count != len(state.adam_m):
            raise FormatError(
                f"{path}: has {count} tensors but the model has {len(state.adam_m)}"
            )
        for i in range(count):
            rows = _binio.read_u64(fh)
            cols = _binio.read_u32(fh)
            if (rows, cols) != state.adam_m[i].shape:
                raise FormatError(
                    f"{path}: tensor {i} shape {(rows, cols)} != expected {state.adam_m[i].shape}"
                )
            state.adam_m[i] = _binio.read_f32_array(fh, (rows, cols)).astype(state.dtype)
            state.adam_v[i] = _binio.read_f32_array(fh, (rows, cols)).astype(state.dtype)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    state.adam_steps = steps
