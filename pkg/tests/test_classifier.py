import hashlib
import math

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from luxkit import (
    LabeledExample,
    ScorerConfig,
    filter_top_fraction,
    init_scorer,
    load_scorer,
    save_scorer,
    scorer_forward,
    select_top_fraction,
    train_scorer,
    write_scores,
)
from luxkit.classifier import ScorerMlp
from luxkit.errors import ConfigError, DataError, FormatError


def two_cluster_examples(n=2000, dim=16, seed=0, flip=False):
    """Linearly separable unit-sphere clusters around two random centers."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(2, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.integers(0, 2, size=n)
    x = centers[labels] + rng.normal(0.0, 0.35, size=(n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = labels.astype(np.float32)
    if flip:
        y = 1.0 - y
    return [
        LabeledExample(f"e{i:05d}", x[i].astype(np.float32), float(y[i])) for i in range(n)
    ]


class TestScorerForward:
    def test_zero_parameters_give_half(self):
        mlp = ScorerMlp(
            weights=[np.zeros((4, 3), np.float32), np.zeros((1, 4), np.float32)],
            biases=[np.zeros(4, np.float32), np.zeros(1, np.float32)],
        )
        assert scorer_forward(mlp, np.zeros(3, np.float32)) == 0.5

    def test_monotone_positive_path(self):
        # 1-d chain of positive weights: larger input => larger score
        mlp = ScorerMlp(
            weights=[np.array([[2.0]], np.float32), np.array([[1.5]], np.float32)],
            biases=[np.zeros(1, np.float32), np.zeros(1, np.float32)],
        )
        scores = [scorer_forward(mlp, np.array([v], np.float32)) for v in (0.1, 0.5, 2.0)]
        assert scores[0] < scores[1] < scores[2]

    def test_batch_equals_per_row(self):
        rng = np.random.default_rng(1)
        mlp = init_scorer(8, hidden=(6, 5), seed=3)
        x = rng.normal(size=(20, 8)).astype(np.float32)
        batch = scorer_forward(mlp, x)
        singles = np.array([scorer_forward(mlp, row) for row in x], dtype=np.float32)
        assert batch.tobytes() == singles.tobytes()

    def test_scores_in_open_unit_interval(self):
        rng = np.random.default_rng(2)
        mlp = init_scorer(8, hidden=(6,), seed=4)
        scores = scorer_forward(mlp, rng.normal(size=(50, 8)).astype(np.float32))
        assert ((scores > 0) & (scores < 1)).all()

    def test_dim_mismatch(self):
        mlp = init_scorer(8, hidden=(4,), seed=0)
        with pytest.raises(ConfigError):
            scorer_forward(mlp, np.zeros(5, np.float32))


class TestTrainScorer:
    def test_separable_clusters_reach_high_auc(self):
        examples = two_cluster_examples(n=2000, seed=7)
        train_set, held_out = examples[:1600], examples[1600:]
        mlp, metrics = train_scorer(
            train_set, ScorerConfig(hidden=(32, 32), epochs=20, batch_size=128, seed=1)
        )
        x = np.stack([ex.embedding for ex in held_out])
        y = np.array([ex.label for ex in held_out])
        auc = roc_auc_score(y, scorer_forward(mlp, x))
        assert auc > 0.95
        assert metrics[-1]["loss"] < metrics[0]["loss"]

    def test_flipped_labels_anticorrelate(self):
        examples = two_cluster_examples(n=600, seed=8)
        flipped = two_cluster_examples(n=600, seed=8, flip=True)
        cfg = ScorerConfig(hidden=(16,), epochs=40, batch_size=64, lr=3e-3, seed=2)
        mlp_a, _ = train_scorer(examples, cfg)
        mlp_b, _ = train_scorer(flipped, cfg)
        x = np.stack([ex.embedding for ex in examples])
        a = scorer_forward(mlp_a, x)
        b = scorer_forward(mlp_b, x)
        # Spearman via rank correlation
        ra = np.argsort(np.argsort(a)).astype(np.float64)
        rb = np.argsort(np.argsort(b)).astype(np.float64)
        spearman = np.corrcoef(ra, rb)[0, 1]
        assert spearman < 0

    def test_zero_epochs_returns_seeded_init(self):
        examples = two_cluster_examples(n=50, dim=6, seed=9)
        cfg = ScorerConfig(hidden=(4,), epochs=0, seed=11)
        mlp, metrics = train_scorer(examples, cfg)
        assert metrics == []
        ref = init_scorer(6, hidden=(4,), seed=11)
        for w, r in zip(mlp.weights, ref.weights):
            assert w.tobytes() == r.tobytes()

    def test_single_class_is_an_error(self):
        examples = [
            LabeledExample(f"e{i}", np.ones(4, np.float32) / 2, 1.0) for i in range(10)
        ]
        with pytest.raises(DataError, match="single-class"):
            train_scorer(examples, ScorerConfig(hidden=(4,), epochs=1))

    def test_embeddings_are_frozen(self):
        examples = two_cluster_examples(n=200, dim=8, seed=10)
        digest_before = hashlib.sha256(
            b"".join(ex.embedding.tobytes() for ex in examples)
        ).hexdigest()
        train_scorer(examples, ScorerConfig(hidden=(8,), epochs=3, seed=0))
        digest_after = hashlib.sha256(
            b"".join(ex.embedding.tobytes() for ex in examples)
        ).hexdigest()
        assert digest_before == digest_after

    def test_determinism_under_seed(self):
        examples = two_cluster_examples(n=300, dim=8, seed=12)
        cfg = ScorerConfig(hidden=(8,), epochs=4, seed=21)
        one, _ = train_scorer(examples, cfg)
        two, _ = train_scorer(examples, cfg)
        for a, b in zip(one.weights, two.weights):
            assert a.tobytes() == b.tobytes()


class TestSelectTopFraction:
    def test_ten_percent_of_ten_is_argmax(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=10).astype(np.float32)
        ids = [f"d{i}" for i in range(10)]
        selected = select_top_fraction(ids, scores, 0.10)
        assert selected == [ids[int(np.argmax(scores))]]

    def test_full_fraction_returns_all(self):
        ids = ["b", "a", "c"]
        scores = np.array([0.1, 0.2, 0.3], np.float32)
        assert set(select_top_fraction(ids, scores, 1.0)) == set(ids)

    def test_tie_break_by_ascending_id(self):
        ids = ["a", "b", "c"]
        scores = np.array([0.9, 0.9, 0.1], np.float32)
        assert select_top_fraction(ids, scores, 0.34) == ["a", "b"]  # ceil(1.02)=2

    def test_output_order_is_score_desc_then_id_asc(self):
        ids = ["d", "a", "c", "b"]
        scores = np.array([0.5, 0.9, 0.5, 0.9], np.float32)
        assert select_top_fraction(ids, scores, 1.0) == ["a", "b", "c", "d"]

    def test_size_is_exactly_ceil(self):
        rng = np.random.default_rng(4)
        for n in (1, 7, 10, 33):
            ids = [f"d{i}" for i in range(n)]
            scores = rng.uniform(size=n).astype(np.float32)
            for fraction in (0.1, 0.25, 0.5, 0.99, 1.0):
                assert len(select_top_fraction(ids, scores, fraction)) == math.ceil(fraction * n)

    def test_monotonicity_raising_a_score_keeps_selection(self):
        rng = np.random.default_rng(5)
        ids = [f"d{i}" for i in range(30)]
        scores = rng.uniform(size=30).astype(np.float32)
        selected = set(select_top_fraction(ids, scores, 0.3))
        for doc in list(selected):
            bumped = scores.copy()
            bumped[ids.index(doc)] += 0.05
            assert doc in set(select_top_fraction(ids, bumped, 0.3))

    def test_empty_and_bad_fraction(self):
        with pytest.raises(DataError):
            select_top_fraction([], np.empty(0, np.float32), 0.5)
        with pytest.raises(ConfigError):
            select_top_fraction(["a"], np.array([1.0], np.float32), 0.0)

    def test_file_variant(self, tmp_path):
        path = tmp_path / "s.luxs"
        write_scores(path, ["a", "b", "c"], np.array([0.3, 0.9, 0.5], np.float32))
        assert filter_top_fraction(path, 0.34) == ["b", "c"]  # ceil(1.02) = 2
        assert filter_top_fraction(path, 0.1) == ["b"]


class TestScorerFile:
    def test_round_trip_bitwise(self, tmp_path):
        mlp = init_scorer(12, hidden=(7, 5), seed=6)
        path = tmp_path / "s.luxc"
        save_scorer(path, mlp)
        loaded = load_scorer(path)
        for a, b in zip(loaded.weights, mlp.weights):
            assert a.tobytes() == b.tobytes()
        for a, b in zip(loaded.biases, mlp.biases):
            assert a.tobytes() == b.tobytes()

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "s.luxc"
        path.write_bytes(b"LUXM" + b"\x00" * 8)
        with pytest.raises(FormatError, match="unsupported format"):
            load_scorer(path)
