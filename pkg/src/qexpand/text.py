"""Tokenization, vocabularies and embedding tables."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split on every non-alphanumeric character.

    >>> tokenize("who is the president of the U.S?")
    ['who', 'is', 'the', 'president', 'of', 'the', 'u', 's']
    """
    # ASCII-only alphabet keeps the split locale independent
    return [tok for tok in _SPLIT.split(text.lower()) if tok]


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Dense token <-> id mapping; ids 0-3 are PAD, UNK, BOS, EOS."""

    tokens: tuple[str, ...]
    id_of: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise VocabularyError("vocabulary must start with the special tokens")
        id_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(id_of) != len(self.tokens):
            raise VocabularyError("duplicate tokens in vocabulary")
        object.__setattr__(self, "id_of", id_of)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        return cls(SPECIAL_TOKENS + tuple(words))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    @property
    def words(self) -> tuple[str, ...]:
        """Non-special tokens in id order."""
        return self.tokens[4:]

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.from_words(line for line in lines if line)


def build_vocab(token_corpus: Iterable[Sequence[str]], min_freq: int = 1,
                max_size: int = 50_000) -> Vocabulary:
    """Specials first, then tokens by descending frequency (ties lexicographic)."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    if max_size < 4:
        raise ValueError("max_size must be >= 4")
    counts = Counter(tok for seq in token_corpus for tok in seq)
    ranked = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIAL_TOKENS),
                    key=lambda t: (-counts[t], t))
    return Vocabulary.from_words(ranked[: max_size - 4])


def encode_ids(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [vocab.id_of.get(tok, UNK) for tok in tokens]


def decode_ids(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    n = len(vocab)
    out = []
    for i in ids:
        if not 0 <= i < n:
            raise IndexError(f"token id {i} outside vocabulary of size {n}")
        out.append(vocab.tokens[i])
    return out


class EmbeddingParseError(ValueError):
    pass


class EmbeddingDimensionError(EmbeddingParseError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix has non-finite entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def random_embeddings(vocab: Vocabulary, dim: int = 300, seed: int = 0,
                      dtype=np.float64) -> EmbeddingTable:
    """Uniform [-0.1, 0.1] rows with a zero PAD row."""
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix.astype(dtype, copy=False))


def load_embeddings(path, vocab: Vocabulary, seed: int = 0, dtype=np.float64) -> EmbeddingTable:
    """Read a ``token v1 ... vD`` text file into a table aligned with ``vocab``.

    Vocabulary tokens missing from the file keep the seeded uniform
    initialisation of :func:`random_embeddings`; the PAD row is zero.
    """
    found: dict[int, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) < 2:
                raise EmbeddingParseError(f"line {lineno}: expected a token followed by values")
            if dim is None:
                dim = len(fields) - 1
            elif len(fields) - 1 != dim:
                raise EmbeddingDimensionError(
                    f"line {lineno}: {len(fields) - 1} values, expected {dim}")
            idx = vocab.id_of.get(fields[0])
            try:
                values = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError:
                raise EmbeddingParseError(f"line {lineno}: non-numeric value") from None
            if not np.all(np.isfinite(values)):
                raise EmbeddingParseError(f"line {lineno}: non-finite value")
            if idx is not None and idx not in found:
                found[idx] = values
    if dim is None:
        raise EmbeddingParseError(f"{path}: no embedding lines")
    matrix = random_embeddings(vocab, dim, seed, dtype=np.float64).matrix
    for idx, values in found.items():
        matrix[idx] = values
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix.astype(dtype, copy=False))


STOPWORDS = frozenset("""
a about above after again against all also am an and any are aren as at be because been before
being below between both but by can cannot could couldn did didn do does doesn doing don down
during each else ever few for from further had hadn has hasn have haven having he her here hers
herself him himself his how however i if in into is isn it its itself just let ll me more most
mustn my myself no nor not now of off on once only or other ought our ours ourselves out over own
re s same shan she should shouldn so some such t than that the their theirs them themselves then
there these they this those through to too under until up us ve very was wasn we were weren what
when where which while who whom why will with won would wouldn you your yours yourself yourselves
d m o y ain
""".split())
