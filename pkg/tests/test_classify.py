import itertools

import numpy as np
import pytest

from qexpand import fixture_path
from qexpand.classify import (DegenerateDataError, TfidfFeaturizer, class_accuracy,
                              read_labeled_tsv, train_classifier)

TRAIN = [
    ("sport", "football goal striker"), ("sport", "tennis match referee"),
    ("sport", "goal referee stadium"), ("sport", "striker stadium match"),
    ("money", "bank shares profit"), ("money", "investor profit merger"),
    ("money", "bank merger revenue"), ("money", "shares revenue investor"),
]


def test_featurizer_rows_unit_norm():
    feat = TfidfFeaturizer.fit([t for _, t in TRAIN])
    X = feat.transform(["goal goal bank", "unknownword", "football"])
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    np.testing.assert_allclose(norms, [1.0, 0.0, 1.0], atol=1e-15)


def _separable_by_search(X, y):
    # exhaustive search over sign vectors on the support picks a separating w
    n_feat = X.shape[1]
    for signs in itertools.product((-1.0, 1.0), repeat=n_feat):
        s = X @ np.array(signs)
        if np.all(np.sign(s) == y):
            return True
    return False


def test_separable_toy_set_reaches_full_accuracy():
    texts, labels = [t for _, t in TRAIN], [c for c, _ in TRAIN]
    feat = TfidfFeaturizer.fit(texts)
    X = feat.transform(texts).toarray()
    y = np.array([1.0 if c == "sport" else -1.0 for c in labels])
    # only a handful of features: the brute-force oracle is cheap
    assert X.shape[1] <= 16 and _separable_by_search(X, y)
    clf = train_classifier(texts, labels, epochs=200, lr=0.5, seed=0)
    acc, correct = class_accuracy(clf, texts, labels)
    assert acc == 1.0 and correct == [1.0] * len(texts)
    assert clf.classes == ["money", "sport"]


def test_unseen_vocabulary_goes_to_first_class():
    texts, labels = [t for _, t in TRAIN], [c for c, _ in TRAIN]
    clf = train_classifier(texts, labels, epochs=5)
    assert clf.classify("completely unrelated words") == "money"


def test_single_class_rejected():
    with pytest.raises(DegenerateDataError):
        train_classifier(["a b", "c d"], ["x", "x"])


def test_training_is_deterministic():
    texts, labels = read_labeled_tsv(fixture_path("classify_train.tsv"))
    a = train_classifier(texts, labels, epochs=3, seed=4)
    b = train_classifier(texts, labels, epochs=3, seed=4)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_expander_applied_to_test_texts():
    texts, labels = [t for _, t in TRAIN], [c for c, _ in TRAIN]
    clf = train_classifier(texts, labels, epochs=100)
    acc, _ = class_accuracy(clf, ["nothing here"], ["sport"], lambda t: t + " football striker")
    assert acc == 1.0


def test_read_labeled_tsv_errors(tmp_path):
    (tmp_path / "x.tsv").write_text("sport\tgoal\nno tab here\n")
    with pytest.raises(ValueError, match=":2"):
        read_labeled_tsv(tmp_path / "x.tsv")
