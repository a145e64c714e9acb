import numpy as np
import pytest

from cabin_slu.data.synth import GeneratorConfig, generate_synthetic, synthetic_embeddings
from cabin_slu.embeddings import EmbeddingTable, concat_spaces


def make_embedder(vocab, dim=8, seed=0, coverage=1.0, name="word", policy="zero"):
    words, mat = synthetic_embeddings(vocab, dim, seed, coverage=coverage)
    return concat_spaces([EmbeddingTable.from_tokens(name, words, mat)], policy)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(GeneratorConfig(n_utterances=60, seed=3, ambiguous_fraction=0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
