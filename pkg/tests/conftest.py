import pytest

from corpusprep import langid
from corpusprep.synth import labeled_corpus


@pytest.fixture(scope="session")
def toy_corpus():
    """250 lines per toy language, split 4:1 into train and held-out."""
    corpus = labeled_corpus(250, seed=7)
    train = [c for i, c in enumerate(corpus) if i % 5 != 0]
    held = [c for i, c in enumerate(corpus) if i % 5 == 0]
    return train, held


@pytest.fixture(scope="session")
def toy_model(toy_corpus):
    train, _ = toy_corpus
    return langid.train(train, seed=3)
