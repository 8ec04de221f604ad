import math
import tracemalloc

import numpy as np
import pytest

from luxkit import Document, compute_idf, load_vocab_dump, mine_vocab, save_vocab_dump
from luxkit.errors import ConfigError, DataError, FormatError
from luxkit.vocab import iter_ngrams

from helpers import build_vocab, sep


class TestIterNgrams:
    def test_orders_and_positions(self):
        assert list(iter_ngrams(["a", "b"], 2)) == ["a", "b", sep("a", "b")]

    def test_counting_identity(self):
        keys = list(iter_ngrams(list("abcde"), 5))
        assert len(keys) == 5 + 4 + 3 + 2 + 1

    def test_empty(self):
        assert list(iter_ngrams([], 3)) == []


class TestMineVocab:
    def test_hand_enumerated_tiny_corpus(self):
        vocab = mine_vocab([Document("d", "a b")], target_size=3, max_n=2)
        # counts all 1; ties break lexicographically: "a" < "a<SEP>b" < "b"
        assert vocab.entries == {"a": 0, sep("a", "b"): 1, "b": 2}
        assert vocab.est_counts.tolist() == [1, 1, 1]
        assert vocab.total_ngrams == 3

    def test_top_one(self):
        docs = [Document("d", "x x x y")]
        vocab = mine_vocab(docs, target_size=1, max_n=1)
        assert list(vocab.entries) == ["x"]

    def test_token_in_every_doc_gets_index_zero(self):
        docs = [Document(f"d{i}", f"x filler{i} x extra{i} x") for i in range(20)]
        vocab = mine_vocab(docs, target_size=10, max_n=1)
        assert vocab.entries["x"] == 0

    def test_empty_corpus_is_an_error(self):
        with pytest.raises(DataError, match="no ngrams"):
            mine_vocab([Document("d", "")], target_size=5, max_n=2)

    def test_capacity_below_target_rejected(self):
        with pytest.raises(ConfigError):
            mine_vocab([Document("d", "a b")], target_size=10, capacity=5)

    def test_determinism_byte_identical_dump(self, tmp_path):
        rng = np.random.default_rng(11)
        docs = [
            Document(f"d{i}", " ".join(f"w{rng.integers(0, 50)}" for _ in range(30)))
            for i in range(60)
        ]
        a, b = tmp_path / "a.luxv", tmp_path / "b.luxv"
        save_vocab_dump(a, mine_vocab(docs, target_size=40, max_n=2))
        save_vocab_dump(b, mine_vocab(docs, target_size=40, max_n=2))
        assert a.read_bytes() == b.read_bytes()

    def test_mining_memory_is_bounded_by_capacity(self):
        def stream():
            for i in range(30_000):
                yield Document(f"d{i}", f"w{i % 7919} w{(i * 13) % 7919} w{i % 101}")

        tracemalloc.start()
        vocab = mine_vocab(stream(), target_size=200, capacity=800, max_n=2)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert vocab.size == 200
        # ~150k streamed ngrams must not accumulate: memory tracks capacity
        assert peak < 8 * 1024 * 1024


class TestComputeIdf:
    def test_maximal_frequency_gives_zero_weight(self):
        vocab = build_vocab({"a": 0}, [40], max_n=1, total=40)
        assert compute_idf(vocab)[0] == 0.0

    def test_direct_arithmetic(self):
        vocab = build_vocab({"a": 0, "b": 1}, [1, 9], max_n=1, total=99)
        idf = compute_idf(vocab)
        assert idf[0] == pytest.approx(math.log(100 / 2), abs=1e-6)  # ~3.912
        assert idf[1] == pytest.approx(math.log(100 / 10), abs=1e-6)

    def test_monotone_non_increasing_in_count(self):
        vocab = build_vocab({"a": 0, "b": 1, "c": 2}, [1, 5, 25], max_n=1, total=100)
        idf = compute_idf(vocab)
        assert idf[0] > idf[1] > idf[2] >= 0

    def test_requires_stream_total(self):
        vocab = build_vocab({"a": 0}, [1], max_n=1, total=0)
        with pytest.raises(ConfigError, match="total"):
            compute_idf(vocab)


class TestVocabDump:
    def test_round_trip(self, tmp_path):
        vocab = mine_vocab([Document("d", "a b c a b a")], target_size=5, max_n=2)
        path = tmp_path / "v.luxv"
        save_vocab_dump(path, vocab)
        loaded = load_vocab_dump(path)
        assert loaded.entries == vocab.entries
        assert loaded.est_counts.tolist() == vocab.est_counts.tolist()
        assert loaded.max_n == vocab.max_n
        assert loaded.tokenizer_id == vocab.tokenizer_id
        # the stream total is deliberately not persisted
        assert loaded.total_ngrams == 0

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "v.luxv"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(FormatError, match="unsupported format"):
            load_vocab_dump(path)
