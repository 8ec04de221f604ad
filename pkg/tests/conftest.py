import numpy as np
import pytest

from luxkit import LayerWeights, LexicalDenseModel
from luxkit.model import ACT_L2NORM, ACT_RELU_L2NORM

from helpers import build_vocab


@pytest.fixture
def tiny_vocab():
    """V=4 vocabulary over tokens a/b/c plus the bigram a<SEP>b."""
    return build_vocab(
        {"a": 0, "b": 1, "a\x1fb": 2, "c": 3},
        counts=[8, 5, 3, 2],
        max_n=2,
        total=40,
    )


@pytest.fixture
def tiny_idf():
    return np.array([1.0, 1.5, 2.0, 0.5], dtype=np.float32)


@pytest.fixture
def tiny_model(tiny_vocab, tiny_idf):
    """Fixed-weight V=4 -> 3 -> 2 model used by hand-computed forward tests."""
    w0 = np.array(
        [
            [0.10, -0.20, 0.30, 0.40],
            [-0.50, 0.60, 0.70, -0.80],
            [0.90, 0.10, -0.40, 0.20],
        ],
        dtype=np.float32,
    )
    w1 = np.array(
        [
            [0.20, -0.10, 0.50],
            [-0.30, 0.40, 0.10],
        ],
        dtype=np.float32,
    )
    return LexicalDenseModel(
        vocab=tiny_vocab,
        idf=tiny_idf,
        layers=[
            LayerWeights(weights=w0, activation=ACT_RELU_L2NORM),
            LayerWeights(weights=w1, activation=ACT_L2NORM),
        ],
    )
