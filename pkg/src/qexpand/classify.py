"""One-vs-rest linear SVM on ltc TF-IDF features, trained by subgradient descent."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .text import tokenize


class DegenerateDataError(ValueError):
    pass


@dataclass
class TfidfFeaturizer:
    terms: dict[str, int]
    idf: np.ndarray

    @classmethod
    def fit(cls, texts: Sequence[str]) -> "TfidfFeaturizer":
        df = Counter()
        for text in texts:
            df.update(set(tokenize(text)))
        terms = {t: i for i, t in enumerate(sorted(df))}
        n = len(texts)
        idf = np.array([math.log(n / df[t]) for t in sorted(df)])
        return cls(terms, idf)

    def transform(self, texts: Sequence[str]) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, text in enumerate(texts):
            tf = Counter(t for t in tokenize(text) if t in self.terms)
            entries = sorted((self.terms[t], (1.0 + math.log(n)) * self.idf[self.terms[t]])
                             for t, n in tf.items())
            norm = math.sqrt(sum(w * w for _, w in entries))
            for c, w in entries:
                if w > 0.0:
                    rows.append(r)
                    cols.append(c)
                    vals.append(w / norm)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(texts), len(self.terms)))


@dataclass
class LinearClassifier:
    classes: list[str]
    weights: np.ndarray   # (n_features, n_classes)
    bias: np.ndarray      # (n_classes,)
    featurizer: TfidfFeaturizer

    def decision(self, texts: Sequence[str]) -> np.ndarray:
        X = self.featurizer.transform(texts)
        return np.asarray(X @ self.weights) + self.bias

    def predict(self, texts: Sequence[str]) -> list[str]:
        X = self.featurizer.transform(texts)
        scores = np.asarray(X @ self.weights) + self.bias
        empty = np.diff(X.indptr) == 0
        # np.argmax picks the earliest class on ties
        best = np.where(empty, 0, np.argmax(scores, axis=1))
        return [self.classes[i] for i in best]

    def classify(self, text: str) -> str:
        return self.predict([text])[0]


def train_classifier(texts: Sequence[str], labels: Sequence[str], epochs: int = 30,
                     lr: float = 0.5, seed: int = 0, lam: float = 1e-4,
                     batch_size: int = 32) -> LinearClassifier:
    """Minimise ``lam/2 |w|^2 + mean(max(0, 1 - y w.x))`` per class (one vs rest)."""
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DegenerateDataError("training data must contain at least two classes")
    feat = TfidfFeaturizer.fit(texts)
    X = feat.transform(texts)
    y_idx = np.array([classes.index(lab) for lab in labels])
    Y = -np.ones((len(texts), len(classes)))
    Y[np.arange(len(texts)), y_idx] = 1.0
    W = np.zeros((X.shape[1], len(classes)))
    b = np.zeros(len(classes))
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(texts))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            Xb, Yb = X[idx], Y[idx]
            margins = Yb * (np.asarray(Xb @ W) + b)
            active = (margins < 1.0) * Yb
            gW = lam * W - np.asarray(Xb.T @ active) / len(idx)
            gb = -active.sum(axis=0) / len(idx)
            W -= lr * gW
            b -= lr * gb
    return LinearClassifier(classes, W, b, feat)


def class_accuracy(clf: LinearClassifier, texts: Sequence[str], labels: Sequence[str],
                   expander: Callable[[str], str] | None = None) -> tuple[float, list[float]]:
    """Accuracy and per-item correctness (for paired significance tests)."""
    if expander is not None:
        texts = [expander(t) for t in texts]
    pred = clf.predict(texts)
    correct = [1.0 if p == y else 0.0 for p, y in zip(pred, labels)]
    return (sum(correct) / len(correct) if correct else 0.0), correct


def read_labeled_tsv(path) -> tuple[list[str], list[str]]:
    texts, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'label<TAB>text'")
            labels.append(parts[0])
            texts.append(parts[1])
    return texts, labels
