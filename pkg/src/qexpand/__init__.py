"""Query expansion with a sequence-to-sequence attention model.

Modules:

- :mod:`qexpand.text` -- tokenizer, vocabulary, embedding tables
- :mod:`qexpand.autograd` -- tape-based reverse-mode arrays, SGD, gradient checks
- :mod:`qexpand.encoder` -- BiLSTM sentence encoder and max-pool keyword extraction
- :mod:`qexpand.dataset` -- sentence pairs to (sentence, expansion) examples
- :mod:`qexpand.model` -- encoder-attention-decoder training and greedy expansion
- :mod:`qexpand.retrieval`, :mod:`qexpand.metrics`, :mod:`qexpand.classify`,
  :mod:`qexpand.stats` -- downstream evaluation
"""

from importlib import resources

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled synthetic fixture file (e.g. ``"pairs.jsonl"``)."""
    return resources.files(__name__).joinpath("fixtures", name)
