"""MLP scorer on frozen embeddings, plus top-fraction corpus filtering.

The scorer is a small biased MLP (default 192 -> 256 -> 256 -> 1, ReLU
hidden activations, sigmoid output) trained with binary cross-entropy
against labels in [0, 1].  Embeddings are inputs only and are never
updated.  Filtering selects the ceil(fraction * n) highest-scoring ids with
deterministic tie-breaking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _binio, _kernels
from .corpus_io import read_scores
from .errors import ConfigError, DataError, FormatError
from .trainer import TrainConfig, adam_step_dense, wsd_lr

MAGIC_SCORER = b"LUXC"


@dataclass(eq=False)
class ScorerMlp:
    """Weight matrices (d_out, d_in) and bias vectors; output is one logit."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and aligned")
        self.weights = [np.ascontiguousarray(w, dtype=np.float32) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float32) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise ValueError(f"layer {k}: weight shape {w.shape} / bias shape {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {k}: non-finite parameters")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: d_in {w.shape[1]} breaks the dimension chain")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must produce a single logit")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]


@dataclass
class LabeledExample:
    """A document id, its frozen embedding row, and a label in [0, 1]."""

    doc_id: str
    embedding: np.ndarray
    label: float


@dataclass
class ScorerConfig:
    """Scorer training hyperparameters (conventional defaults)."""

    hidden: tuple[int, ...] = (256, 256)
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    warmup_frac: float = 0.05
    decay_frac: float = 0.10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


def init_scorer(input_dim: int, hidden: Sequence[int] = (256, 256), seed: int = 0) -> ScorerMlp:
    """Random scorer: uniform +-sqrt(6/(d_in+d_out)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    widths = [input_dim, *hidden, 1]
    weights, biases = [], []
    for k in range(len(widths) - 1):
        d_in, d_out = widths[k], widths[k + 1]
        bound = math.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)).astype(np.float32))
        biases.append(np.zeros(d_out, dtype=np.float32))
    return ScorerMlp(weights=weights, biases=biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logits(mlp: ScorerMlp, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        h = np.maximum(_kernels.matmul_wt(h, w) + b, 0)
    return (_kernels.matmul_wt(h, mlp.weights[-1]) + mlp.biases[-1])[:, 0]


def scorer_forward(mlp: ScorerMlp, embedding: np.ndarray) -> float | np.ndarray:
    """Sigmoid score(s) for one embedding (d,) or a batch (n, d).

    Batch scoring equals per-row scoring bit for bit: the forward pass uses
    the same fixed-order kernels as the embedding model.
    """
    x = np.ascontiguousarray(embedding, dtype=np.float32)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != mlp.input_dim:
        raise ConfigError(f"scorer expects dim {mlp.input_dim}, got {x.shape[1]}")
    scores = _sigmoid(_logits(mlp, x))
    return float(scores[0]) if single else scores


def _bce_loss_and_dlogits(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    # mean of softplus(z) - y*z, the numerically stable binary cross-entropy
    loss = float(np.mean(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))
    return loss, (_sigmoid(logits) - y) / logits.shape[0]


def train_scorer(
    examples: Sequence[LabeledExample], cfg: ScorerConfig | None = None
) -> tuple[ScorerMlp, list[dict]]:
    """Fit the scorer with Adam + the warmup-stable-decay schedule.

    Embeddings are frozen inputs; only MLP parameters move.  Deterministic
    under cfg.seed.  Raises :class:`DataError` when fewer than two distinct
    label values are present (nothing to separate).
    """
    cfg = cfg or ScorerConfig()
    if not examples:
        raise DataError("no training examples")
    y = np.array([ex.label for ex in examples], dtype=np.float32)
    if ((y < 0) | (y > 1)).any():
        raise DataError("labels must lie in [0, 1]")
    if np.unique(y).size < 2:
        raise DataError("single-class input: need at least 2 distinct label values")
    x = np.stack([np.asarray(ex.embedding, dtype=np.float32) for ex in examples])

    mlp = init_scorer(x.shape[1], hidden=cfg.hidden, seed=cfg.seed)
    params = [*mlp.weights, *mlp.biases]
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]

    n = x.shape[0]
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    schedule = TrainConfig(
        batch_size=max(2, cfg.batch_size),
        peak_lr=cfg.lr,
        warmup_frac=cfg.warmup_frac,
        decay_frac=cfg.decay_frac,
        epochs=max(1, cfg.epochs),
        seed=cfg.seed,
    )
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo : lo + cfg.batch_size]
            xb, yb = x[sel], y[sel]
            lr = wsd_lr(step, total_steps, schedule)
            loss, grads = _scorer_grads(mlp, xb, yb)
            for p, g, m, v in zip(params, grads, adam_m, adam_v):
                adam_step_dense(p, g, m, v, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, step + 1)
            metrics.append({"step": step, "lr": lr, "loss": loss})
            step += 1
    return mlp, metrics


def _scorer_grads(mlp: ScorerMlp, x: np.ndarray, y: np.ndarray):
    """BCE loss and gradients for every weight and bias tensor."""
    acts = [x]
    zs = []
    h = x
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        z = _kernels.matmul_wt(h, w) + b
        zs.append(z)
        h = np.maximum(z, 0)
        acts.append(h)
    logits = (_kernels.matmul_wt(h, mlp.weights[-1]) + mlp.biases[-1])[:, 0]
    loss, dlog = _bce_loss_and_dlogits(logits, y)

    grad_w = [np.empty(0)] * len(mlp.weights)
    grad_b = [np.empty(0)] * len(mlp.biases)
    dz = dlog[:, None]
    grad_w[-1] = dz.T @ acts[-1]
    grad_b[-1] = dz.sum(axis=0)
    dh = dz @ mlp.weights[-1]
    for k in reversed(range(len(mlp.weights) - 1)):
        dz = dh * (zs[k] > 0)
        grad_w[k] = dz.T @ acts[k]
        grad_b[k] = dz.sum(axis=0)
        dh = dz @ mlp.weights[k]
    return loss, [*grad_w, *grad_b]


def select_top_fraction(ids: Sequence[str], scores: np.ndarray, fraction: float) -> list[str]:
    """The ceil(fraction * n) ids with the highest scores.

    Ties are broken by ascending id; output order is descending score then
    ascending id, so the result is a pure function of the (id, score) pairs.
    """
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    n = len(ids)
    if n == 0:
        raise DataError("empty scores input")
    scores = np.asarray(scores, dtype=np.float32)
    if scores.shape != (n,):
        raise ConfigError("ids and scores must align 1:1")
    if not np.isfinite(scores).all():
        raise DataError("scores contain non-finite values")
    k = math.ceil(fraction * n)
    id_arr = np.array(ids)
    order = np.lexsort((id_arr, -scores))
    return [str(id_arr[i]) for i in order[:k]]


def filter_top_fraction(scores_path, fraction: float) -> list[str]:
    """Apply :func:`select_top_fraction` to a LUXS scores file."""
    ids, scores = read_scores(scores_path)
    return select_top_fraction(ids, scores, fraction)


def save_scorer(path, mlp: ScorerMlp) -> None:
    """LUXC layout: magic, version u32, layer count u32, then per layer
    d_out u32, d_in u32, float32 weights row-major, float32 biases."""
    with open(path, "wb") as fh:
        _binio.write_magic_version(fh, MAGIC_SCORER)
        _binio.write_u32(fh, len(mlp.weights))
        for w, b in zip(mlp.weights, mlp.biases):
            _binio.write_u32(fh, w.shape[0])
            _binio.write_u32(fh, w.shape[1])
            _binio.write_f32_array(fh, w)
            _binio.write_f32_array(fh, b)


def load_scorer(path) -> ScorerMlp:
    with open(path, "rb") as fh:
        _binio.expect_magic_version(fh, MAGIC_SCORER)
        count = _binio.read_u32(fh)
        weights, biases = [], []
        for _ in range(count):
            d_out = _binio.read_u32(fh)
            d_in = _binio.read_u32(fh)
            weights.append(_binio.read_f32_array(fh, (d_out, d_in)))
            biases.append(_binio.read_f32_array(fh, (d_out,)))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    try:
        return ScorerMlp(weights=weights, biases=biases)
    except ValueError as exc:
        raise FormatError(f"{path}: inconsistent scorer file: {exc}") from None
