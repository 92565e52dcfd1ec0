"""Bidirectional LSTM sentence encoder and max-pool keyword extraction.

Weights use the row-vector convention: a layer computes
``z = x @ W + h @ U + b`` with ``W`` of shape (in, 4H) and the four gate
blocks laid out as input, forget, output, candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autograd import Node, Parameter, Tape
from .checkpoint import check_shapes, load_tensors, save_tensors
from .text import EmbeddingTable, Vocabulary, encode_ids, random_embeddings

GATES = ("i", "f", "o", "g")


class EmptyInputError(ValueError):
    pass


@dataclass
class LstmLayerParams:
    W: Parameter
    U: Parameter
    b: Parameter

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "",
             dtype=np.float64, scale: float | None = None) -> "LstmLayerParams":
        scale = 1.0 / np.sqrt(hidden) if scale is None else scale
        W = rng.uniform(-scale, scale, size=(in_dim, 4 * hidden))
        U = rng.uniform(-scale, scale, size=(hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(Parameter(W.astype(dtype), prefix + "W"),
                   Parameter(U.astype(dtype), prefix + "U"),
                   Parameter(b.astype(dtype), prefix + "b"))

    @property
    def hidden(self) -> int:
        return self.U.value.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.value.shape[0]

    def gate(self, name: str):
        """Views ``(W, U, b)`` of one gate block."""
        k = GATES.index(name)
        h = self.hidden
        sl = slice(k * h, (k + 1) * h)
        return self.W.value[:, sl], self.U.value[:, sl], self.b.value[sl]

    def params(self) -> list[Parameter]:
        return [self.W, self.U, self.b]


def lstm_step(x, h_prev, c_prev, p: LstmLayerParams, tape: Tape | None = None):
    """Single LSTM step.

    With a tape the arguments and results are nodes; without one they are
    plain arrays and nothing is recorded.
    """
    if tape is None:
        t = Tape(record=False)
        h, c = lstm_step(t.constant(x), t.constant(h_prev), t.constant(c_prev), p, t)
        return h.value, c.value
    z = tape.add(tape.add(tape.matmul(x, p.W), tape.matmul(h_prev, p.U)), p.b)
    return tape.lstm_cell(z, c_prev)


def run_lstm(tape: Tape, p: LstmLayerParams, xs: Sequence[Node], mask: np.ndarray | None = None,
             reverse: bool = False):
    """Run one direction over ``xs`` (a list of B x in nodes).

    Padded steps (mask 0) carry the previous state through unchanged, so the
    final state of the forward pass is the state at each sequence's last
    real token and the backward pass starts from zeros at that token.
    Returns ``(hs, (h_final, c_final))`` with ``hs`` in time order.
    """
    batch = xs[0].shape[0]
    dtype = p.W.value.dtype
    h = tape.constant(np.zeros((batch, p.hidden), dtype=dtype))
    c = tape.constant(np.zeros((batch, p.hidden), dtype=dtype))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    hs: list = [None] * len(xs)
    for t in order:
        h_new, c_new = lstm_step(xs[t], h, c, p, tape)
        if mask is not None and not mask[:, t].all():
            m = mask[:, t:t + 1]
            h_new = tape.blend(m, h_new, h)
            c_new = tape.blend(m, c_new, c)
        h, c = h_new, c_new
        hs[t] = h
    return hs, (h, c)


@dataclass
class BiEncoderParams:
    layers: list  # of (forward LstmLayerParams, backward LstmLayerParams)

    @classmethod
    def init(cls, input_dim: int, hidden: int, num_layers: int, rng: np.random.Generator,
             prefix: str = "encoder", dtype=np.float64, scale: float | None = None):
        layers = []
        for k in range(num_layers):
            in_dim = input_dim if k == 0 else 2 * hidden
            layers.append(tuple(
                LstmLayerParams.init(in_dim, hidden, rng, f"{prefix}.l{k}.{d}.", dtype, scale)
                for d in ("fwd", "bwd")))
        return cls(layers)

    @property
    def hidden(self) -> int:
        return self.layers[0][0].hidden

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].in_dim

    def params(self) -> list[Parameter]:
        return [p for fwd, bwd in self.layers for layer in (fwd, bwd) for p in layer.params()]


def run_bilstm(tape: Tape, enc: BiEncoderParams, xs: Sequence[Node], mask: np.ndarray | None = None,
               between_layers: Callable[[Node], Node] | None = None):
    """Stacked bidirectional pass.

    Returns ``(annotations, finals)``: the top layer's per-step
    ``[forward; backward]`` states and, per layer, the concatenated final
    states ``[forward last; backward first]``.  ``between_layers`` (dropout)
    is applied to the input of every layer above the first.
    """
    finals = []
    inputs = list(xs)
    for k, (fwd, bwd) in enumerate(enc.layers):
        if k > 0 and between_layers is not None:
            inputs = [between_layers(x) for x in inputs]
        hf, (f_last, _) = run_lstm(tape, fwd, inputs, mask)
        hb, (b_last, _) = run_lstm(tape, bwd, inputs, mask, reverse=True)
        inputs = [tape.concat([a, b]) for a, b in zip(hf, hb)]
        finals.append(tape.concat([f_last, b_last]))
    return inputs, finals


def encode(ids: Sequence[int], params: BiEncoderParams, emb: EmbeddingTable):
    """Encode one id sequence; returns ``(annotations T x 2H, pooled 2H)``."""
    if len(ids) == 0:
        raise EmptyInputError("cannot encode an empty sequence")
    tape = Tape(record=False)
    table = emb.matrix.astype(params.layers[0][0].W.value.dtype, copy=False)
    xs = [tape.constant(table[[i]]) for i in ids]
    ann, _ = run_bilstm(tape, params, xs)
    annotations = np.concatenate([a.value for a in ann], axis=0)
    return annotations, annotations.max(axis=0)


def keyword_counts(annotations: np.ndarray) -> np.ndarray:
    """How many pooled dimensions each time step wins (ties go to the earliest step)."""
    annotations = np.asarray(annotations)
    winners = np.argmax(annotations, axis=0)
    return np.bincount(winners, minlength=annotations.shape[0])


def rank_keywords(tokens: Sequence[str], counts: Sequence[int], stopwords=frozenset(),
                  max_k: int | None = None) -> list[tuple[str, int]]:
    """Merge duplicate tokens, drop zero counts and stopwords, sort by count."""
    merged: dict[str, list] = {}
    for pos, (tok, n) in enumerate(zip(tokens, counts)):
        if tok in merged:
            merged[tok][0] += int(n)
        else:
            merged[tok] = [int(n), pos]
    ranked = sorted(((tok, n, pos) for tok, (n, pos) in merged.items()
                     if n > 0 and tok not in stopwords), key=lambda r: (-r[1], r[2]))
    if max_k is not None:
        ranked = ranked[:max_k]
    return [(tok, n) for tok, n, _ in ranked]


@dataclass
class SentenceEncoder:
    """Vocabulary, embeddings and BiLSTM weights used for keyword extraction."""

    vocab: Vocabulary
    embeddings: EmbeddingTable
    params: BiEncoderParams

    @classmethod
    def random(cls, vocab: Vocabulary, seed: int = 0, hidden: int = 500, num_layers: int = 2,
               emb_dim: int = 300, dtype=np.float64) -> "SentenceEncoder":
        ss = np.random.SeedSequence(seed)
        emb_seed, w_seed = ss.spawn(2)
        emb = random_embeddings(vocab, emb_dim, int(emb_seed.generate_state(1)[0]), dtype=dtype)
        params = BiEncoderParams.init(emb_dim, hidden, num_layers,
                                      np.random.default_rng(w_seed), dtype=dtype)
        return cls(vocab, emb, params)

    @property
    def pool_width(self) -> int:
        return 2 * self.params.hidden

    def encode_tokens(self, tokens: Sequence[str]):
        return encode(encode_ids(tokens, self.vocab), self.params, self.embeddings)

    def counts(self, tokens: Sequence[str]) -> np.ndarray:
        annotations, _ = self.encode_tokens(tokens)
        return keyword_counts(annotations)

    def save(self, path) -> None:
        tensors = {"embedding": self.embeddings.matrix}
        tensors.update({p.name: p.value for p in self.params.params()})
        meta = {"kind": "encoder", "vocab": list(self.vocab.words),
                "hidden": self.params.hidden, "layers": self.params.num_layers,
                "emb_dim": self.embeddings.dim}
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "SentenceEncoder":
        tensors, meta = load_tensors(path)
        vocab = Vocabulary.from_words(meta["vocab"])
        emb = tensors["embedding"]
        dtype = emb.dtype
        params = BiEncoderParams.init(meta["emb_dim"], meta["hidden"], meta["layers"],
                                      np.random.default_rng(0), dtype=dtype)
        expected = {"embedding": (len(vocab), meta["emb_dim"])}
        expected.update({p.name: p.value.shape for p in params.params()})
        check_shapes(tensors, expected)
        for p in params.params():
            p.value[...] = tensors[p.name]
        return cls(vocab, EmbeddingTable(emb.copy()), params)


def extract_keywords(tokens: Sequence[str], encoder: SentenceEncoder, stopwords=frozenset(),
                     max_k: int | None = None) -> list[str]:
    """Tokens whose annotations the max-pool selects most often, best first."""
    if len(tokens) == 0:
        return []
    counts = encoder.counts(tokens)
    return [tok for tok, _ in rank_keywords(tokens, counts, stopwords, max_k)]
