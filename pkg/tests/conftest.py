"""Shared fixtures: a zero-entropy corpus, a model overfit on it, and a
served bundle. Session-scoped because training even a tiny model dominates
the suite's runtime otherwise.
"""

import pytest

from hierolm.checkpoint import save_checkpoint
from hierolm.corpus import Vocabulary, encode_split, split_dataset, tokenize_line
from hierolm.service import ModelBundle
from hierolm.training import TrainConfig, train

# One fixed sentence repeated: every next-token distribution is a point mass,
# so a correct model drives accuracy to 1.0 and perplexity to 1.0.
FIXED_LINE = "Htp dj nswt wsjr nb Ddw"


@pytest.fixture(scope="session")
def fixed_corpus():
    sentences = [tokenize_line(FIXED_LINE) for _ in range(50)]
    split = split_dataset(sentences)
    vocab = Vocabulary.build(split.train)
    encoded = encode_split(split, vocab)
    return split, vocab, encoded


@pytest.fixture(scope="session")
def overfit_result(fixed_corpus):
    _, vocab, encoded = fixed_corpus
    config = TrainConfig(architecture="lstm", embed_size=16, hidden_size=16,
                         dropout=0.0, batch_size=32, initial_lr=1e-2,
                         max_epochs=30, seed=0)
    ckpt, state = train(config, encoded, vocab)
    return ckpt, state


@pytest.fixture(scope="session")
def checkpoint_file(overfit_result, tmp_path_factory):
    ckpt, _ = overfit_result
    path = tmp_path_factory.mktemp("ckpt") / "fixed.hlm"
    save_checkpoint(path, ckpt)
    return path


@pytest.fixture(scope="session")
def bundle(checkpoint_file):
    return ModelBundle.from_checkpoint_path(checkpoint_file)
