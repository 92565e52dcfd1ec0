"""Headline topic classification with a one-vs-rest linear SVM.

Features are ltc TF-IDF vectors; the model is trained by hinge-loss
subgradient descent.  Test headlines can be expanded before scoring.
"""
from pathlib import Path

from qexpand import fixture_path
from qexpand.classify import class_accuracy, read_labeled_tsv, train_classifier
from qexpand.model import Expander

OUT = Path(__file__).parent / "out"
train_x, train_y = read_labeled_tsv(fixture_path("classify_train.tsv"))
test_x, test_y = read_labeled_tsv(fixture_path("classify_test.tsv"))

clf = train_classifier(train_x, train_y, epochs=30, lr=0.5, seed=0)
print("classes:", clf.classes)
acc, _ = class_accuracy(clf, test_x, test_y)
print(f"test accuracy without QE: {acc:.4f}")

if (OUT / "model.ckpt").exists():
    expander = Expander.from_checkpoint(OUT / "model.ckpt")
    acc_qe, _ = class_accuracy(clf, test_x, test_y, expander)
    print(f"test accuracy with QE:    {acc_qe:.4f}")

for text in test_x[:5]:
    print(f"{clf.classify(text):9s} {text}")
