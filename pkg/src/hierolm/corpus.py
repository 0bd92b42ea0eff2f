"""Loading, tokenizing, indexing, and splitting transliteration corpora.

Corpus files are plain UTF-8 text, one MdC sentence per line (LF or CRLF).
Tokens are the maximal whitespace-delimited substrings of a line; no further
normalization is applied, since MdC text is assumed pre-normalized. All
functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import collections
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# Special token ids are fixed so checkpoints stay portable across corpora.
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN = "<pad>", "<s>", "</s>", "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

Sentence = list  # list[str]; tokens are non-empty strings without whitespace


class EmptyLine(ValueError):
    """Raised when a line to tokenize contains only whitespace."""


class TooFewSentences(ValueError):
    """Raised when a corpus cannot be divided into the requested splits."""


def tokenize_line(line: str) -> list[str]:
    """Split one MdC line into its whitespace-delimited tokens, in order."""
    tokens = line.split()
    if not tokens:
        raise EmptyLine("line contains no tokens")
    return tokens


def join_tokens(tokens: list[str]) -> str:
    return " ".join(tokens)


def read_corpus(path: str | Path) -> list[list[str]]:
    """Read a one-sentence-per-line corpus file, skipping blank lines."""
    sentences = []
    blank = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                sentences.append(tokenize_line(line))
            except EmptyLine:
                blank += 1
    if blank:
        log.warning("%s: skipped %d blank line(s)", path, blank)
    return sentences


@dataclass
class Vocabulary:
    """Bidirectional token<->id map with fixed special ids 0..3.

    Non-special ids are assigned in descending corpus frequency, ties broken
    lexicographically, starting at id 4. Tokens that collide with a special
    surface string are reserved and always map to the special id.
    """

    token_to_id: dict
    id_to_token: list

    @classmethod
    def build(cls, sentences: list[list[str]], min_count: int = 1) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not sentences:
            raise ValueError("cannot build a vocabulary from zero sentences")
        counts = collections.Counter()
        for sent in sentences:
            counts.update(sent)
        kept = sorted(
            (tok for tok, c in counts.items()
             if c >= min_count and tok not in SPECIAL_TOKENS),
            key=lambda tok: (-counts[tok], tok),
        )
        id_to_token = list(SPECIAL_TOKENS) + kept
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        return cls(token_to_id, id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, sentence: list[str]) -> list[int]:
        """Map tokens to ids, OOV to UNK, wrapped as [BOS] + ids + [EOS]."""
        ids = [self.token_to_id.get(tok, UNK_ID) for tok in sentence]
        return [BOS_ID] + ids + [EOS_ID]

    def decode(self, ids) -> list[str]:
        """Inverse of encode on in-vocabulary sentences; drops PAD/BOS/EOS."""
        return [
            self.id_to_token[i]
            for i in ids
            if i not in (PAD_ID, BOS_ID, EOS_ID)
        ]

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def save(self, path: str | Path) -> None:
        """Write one token per line in id order; ids are implied by line number."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token:
                fh.write(tok + "\n")

    @classmethod
    def from_tokens(cls, id_to_token: list) -> "Vocabulary":
        if tuple(id_to_token[:4]) != SPECIAL_TOKENS:
            raise ValueError("token list must start with the four special tokens")
        if len(set(id_to_token)) != len(id_to_token):
            raise ValueError("token list contains duplicates")
        return cls({tok: i for i, tok in enumerate(id_to_token)}, list(id_to_token))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_tokens([line.rstrip("\n") for line in fh])


@dataclass
class DatasetSplit:
    """Train/validation/test partition; items are whatever was passed in
    (surface sentences or id-encoded sentences)."""

    train: list
    validation: list
    test: list

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def split_dataset(sentences: list, ratios=(8, 1, 1), seed: int = 0) -> DatasetSplit:
    """Deterministically shuffle and slice into train/validation/test.

    Validation and test sizes are floor(n * ratio / total), but never zero;
    the remainder goes to train. Identical seeds produce identical splits.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    n = len(sentences)
    if n < 3:
        raise TooFewSentences(f"need at least 3 sentences to split, got {n}")
    total = sum(ratios)
    n_val = max(1, n * ratios[1] // total)
    n_test = max(1, n * ratios[2] // total)
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    pick = lambda idx: [sentences[i] for i in idx]
    return DatasetSplit(
        train=pick(order[:n_train]),
        validation=pick(order[n_train:n_train + n_val]),
        test=pick(order[n_train + n_val:]),
    )


def encode_split(split: DatasetSplit, vocab: Vocabulary) -> DatasetSplit:
    enc = lambda sents: [vocab.encode(s) for s in sents]
    return DatasetSplit(enc(split.train), enc(split.validation), enc(split.test))


@dataclass
class CorpusStats:
    sentence_count: int
    vocab_count: int
    token_count: int
    split_counts: dict = field(default_factory=dict)
    length_histogram: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "sentence_count": self.sentence_count,
            "vocab_count": self.vocab_count,
            "token_count": self.token_count,
            "split_counts": dict(self.split_counts),
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
        }


def corpus_stats(sentences: list[list[str]], vocab: Vocabulary,
                 split: DatasetSplit | None = None) -> CorpusStats:
    hist = collections.Counter(len(s) for s in sentences)
    counts = {}
    if split is not None:
        counts = {
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        }
    return CorpusStats(
        sentence_count=len(sentences),
        vocab_count=vocab.size,
        token_count=sum(len(s) for s in sentences),
        split_counts=counts,
        length_histogram=dict(hist),
    )
