"""luxkit: CPU-first lexical-dense text embeddings.

Mine an ngram vocabulary from a corpus, train a small sparse-input ReLU
network by Gram-matrix distillation from precomputed teacher embeddings,
then embed, score, filter, and evaluate at batch speed.
"""

from .classifier import (
    LabeledExample,
    ScorerConfig,
    ScorerMlp,
    filter_top_fraction,
    init_scorer,
    load_scorer,
    save_scorer,
    scorer_forward,
    select_top_fraction,
    train_scorer,
)
from .corpus_io import (
    Document,
    EmbeddingMatrix,
    read_corpus,
    read_embeddings,
    read_scores,
    write_corpus,
    write_embeddings,
    write_scores,
)
from .errors import ConfigError, DataError, FormatError, LuxkitError
from .evaluation import (
    ErrorCurve,
    HalfPair,
    error_at_k,
    pair_map,
    partner_ranks,
    split_corpus,
    split_halves,
    throughput_bench,
)
from .featurizer import SparseBatch, SparseVector, extract_ngrams, featurize, featurize_batch, featurize_csr
from .model import (
    LayerWeights,
    LexicalDenseModel,
    embed,
    embed_batch,
    init_model,
    l2_normalize,
    load_model,
    save_model,
    sparse_dense_matvec,
)
from .sketch import SpaceSavingSketch
from .tokenizer import TOKENIZER_ID, get_tokenizer, register_tokenizer, tokenize, tokenize_batch
from .trainer import (
    TrainConfig,
    TrainState,
    distill_loss,
    gram,
    load_optimizer_state,
    save_optimizer_state,
    train,
    train_step,
    wsd_lr,
)
from .vocab import IDF_FORMULA, NGRAM_SEP, NgramVocab, compute_idf, load_vocab_dump, mine_vocab, save_vocab_dump

__version__ = "0.1.0"
