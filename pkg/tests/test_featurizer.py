import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from luxkit import Document, extract_ngrams, featurize, featurize_batch, featurize_csr
from luxkit.errors import ConfigError

from helpers import build_vocab, featurize_oracle, random_token_docs, sep


class TestExtractNgrams:
    def test_empty(self):
        assert extract_ngrams([], 3) == []

    def test_hand_enumeration(self):
        assert extract_ngrams(["a", "b"], 2) == ["a", "b", sep("a", "b")]

    def test_counting_identity(self):
        assert len(extract_ngrams(list("abcde"), 5)) == 15


class TestFeaturize:
    def test_single_match_normalizes_to_one(self, tiny_vocab, tiny_idf):
        vec = featurize(["c"], tiny_vocab, tiny_idf)
        assert vec.indices.tolist() == [3]
        assert vec.values.tolist() == [1.0]

    def test_empty_tokens_give_empty_vector(self, tiny_vocab, tiny_idf):
        vec = featurize([], tiny_vocab, tiny_idf)
        assert vec.is_empty()

    def test_no_match_gives_empty_vector(self, tiny_vocab, tiny_idf):
        assert featurize(["zz", "qq"], tiny_vocab, tiny_idf).is_empty()

    def test_hand_arithmetic(self):
        # doc "a a b" with idf(a)=2, idf(b)=1: raw=(4,1), unit=(0.970143, 0.242536)
        vocab = build_vocab({"a": 0, "b": 1}, [2, 4], max_n=1, total=10)
        idf = np.array([2.0, 1.0], dtype=np.float32)
        vec = featurize(["a", "a", "b"], vocab, idf)
        assert vec.indices.tolist() == [0, 1]
        assert vec.values == pytest.approx([0.970143, 0.242536], abs=1e-5)

    def test_zero_idf_entries_are_dropped(self, tiny_vocab):
        idf = np.array([0.0, 1.0, 1.0, 1.0], dtype=np.float32)
        vec = featurize(["a"], tiny_vocab, idf)
        assert vec.is_empty()

    def test_dimension_mismatch_is_config_error(self, tiny_vocab):
        with pytest.raises(ConfigError):
            featurize(["a"], tiny_vocab, np.ones(3, dtype=np.float32))

    def test_unit_norm_within_tolerance(self, tiny_vocab, tiny_idf):
        vec = featurize(["a", "b", "a", "c", "b", "a"], tiny_vocab, tiny_idf)
        assert abs(vec.l2_norm() - 1.0) < 1e-6

    def test_bag_of_words_permutation_invariance(self):
        vocab = build_vocab({"a": 0, "b": 1, "c": 2}, [3, 2, 1], max_n=1, total=9)
        idf = np.array([1.0, 2.0, 3.0], dtype=np.float32)
        one = featurize(["a", "b", "c", "a"], vocab, idf)
        two = featurize(["c", "a", "a", "b"], vocab, idf)
        assert one.indices.tolist() == two.indices.tolist()
        assert one.values.tolist() == two.values.tolist()

    def test_idf_scale_invariance(self, tiny_vocab, tiny_idf):
        tokens = ["a", "b", "a", "c"]
        base = featurize(tokens, tiny_vocab, tiny_idf)
        scaled = featurize(tokens, tiny_vocab, tiny_idf * np.float32(7.5))
        assert base.indices.tolist() == scaled.indices.tolist()
        assert scaled.values == pytest.approx(base.values.tolist(), rel=1e-6)

    def test_support_bounded_by_ngram_count(self, tiny_vocab, tiny_idf):
        tokens = ["a", "b"]
        vec = featurize(tokens, tiny_vocab, tiny_idf)
        assert vec.nnz <= len(extract_ngrams(tokens, tiny_vocab.max_n))


class TestFeaturizeBatch:
    def test_elementwise_definition(self, tiny_vocab, tiny_idf):
        seqs = [["a", "b"], ["c"]]
        batch = featurize_batch(seqs, tiny_vocab, tiny_idf)
        for row, seq in zip(batch, seqs):
            single = featurize(seq, tiny_vocab, tiny_idf)
            assert row.indices.tolist() == single.indices.tolist()
            assert row.values.tobytes() == single.values.tobytes()

    def test_batch_equals_concatenated_subbatches(self, tiny_vocab, tiny_idf):
        seqs = [["a"], ["b", "c"], ["a", "b", "a"], []]
        whole = featurize_batch(seqs, tiny_vocab, tiny_idf)
        parts = featurize_batch(seqs[:2], tiny_vocab, tiny_idf) + featurize_batch(
            seqs[2:], tiny_vocab, tiny_idf
        )
        for a, b in zip(whole, parts):
            assert a.indices.tolist() == b.indices.tolist()
            assert a.values.tobytes() == b.values.tobytes()

    def test_differential_vs_reference_and_oracle(self, tiny_vocab, tiny_idf):
        from luxkit import tokenize

        docs = random_token_docs(400, ["a", "b", "c"], seed=5)
        seqs = [tokenize(d.text) for d in docs]
        batch = featurize_batch(seqs, tiny_vocab, tiny_idf)
        for row, seq in zip(batch, seqs):
            single = featurize(seq, tiny_vocab, tiny_idf)
            assert row.indices.tolist() == single.indices.tolist()
            assert row.values.tobytes() == single.values.tobytes()
            oracle_idx, oracle_vals = featurize_oracle(seq, tiny_vocab, tiny_idf)
            assert row.indices.tolist() == oracle_idx.tolist()
            np.testing.assert_allclose(row.values, oracle_vals, rtol=1e-6, atol=1e-9)

    def test_csr_empty_rows(self, tiny_vocab, tiny_idf):
        batch = featurize_csr([[], ["a"], []], tiny_vocab, tiny_idf)
        assert batch.empty_rows().tolist() == [0, 2]
        assert len(batch) == 3


@given(
    tokens=st.lists(st.sampled_from(["a", "b", "c", "zz"]), max_size=30),
    idf_scale=st.floats(0.25, 8.0),
)
@settings(max_examples=150, deadline=None)
def test_norm_is_zero_or_one(tokens, idf_scale):
    vocab = build_vocab({"a": 0, "b": 1, sep("a", "b"): 2, "c": 3}, [8, 5, 3, 2], 2, 40)
    idf = (np.array([1.0, 1.5, 2.0, 0.5], dtype=np.float32) * np.float32(idf_scale))
    vec = featurize(tokens, vocab, idf)
    norm = vec.l2_norm()
    assert norm == 0.0 or abs(norm - 1.0) < 1e-6
