"""Encoder-attention-decoder expansion model: training and greedy decoding.

The encoder is the stacked BiLSTM of :mod:`qexpand.encoder`.  Each decoder
step feeds ``[embed(y_prev); previous context]`` through a stacked LSTM,
scores the annotations additively against the new top state and predicts
the next token from ``[state; context]``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import (DimensionError, Node, NumericFault, Parameter, Tape, dropout_mask,
                       grad_check, log_softmax_rows, sgd_step, softmax_rows, zero_grads)
from .checkpoint import check_shapes, load_tensors, save_tensors
from .encoder import BiEncoderParams, EmptyInputError, LstmLayerParams, lstm_step, run_bilstm
from .text import BOS, EOS, PAD, SPECIAL_TOKENS, EmbeddingTable, Vocabulary, encode_ids, tokenize

log = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    pass


def _glorot(rng, shape, dtype):
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    emb_dim: int = 300
    hidden: int = 500
    enc_layers: int = 2
    dec_layers: int = 2
    attention: int | None = None
    dtype: str = "float64"

    @property
    def attention_size(self) -> int:
        return self.hidden if self.attention is None else self.attention


@dataclass
class AttentionParams:
    W_s: Parameter  # (S, A)
    W_h: Parameter  # (2H, A)
    v: Parameter    # (A, 1)

    def params(self):
        return [self.W_s, self.W_h, self.v]


@dataclass
class DecoderParams:
    layers: list
    W_o: Parameter  # (S + 2H, V)
    b_o: Parameter  # (V,)
    bridge: list    # of (W (2H, S), b (S,)) per decoder layer

    def params(self):
        out = [p for layer in self.layers for p in layer.params()]
        out += [self.W_o, self.b_o]
        out += [p for pair in self.bridge for p in pair]
        return out


@dataclass
class Seq2SeqParams:
    config: ModelConfig
    embedding: Parameter
    encoder: BiEncoderParams
    decoder: DecoderParams
    attention: AttentionParams

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, embeddings: EmbeddingTable | None = None,
             scale: float | None = None) -> "Seq2SeqParams":
        """Random initialisation.

        By default LSTM weights are uniform in +-1/sqrt(H), projections use
        Glorot-uniform limits and embeddings +-0.1.  ``scale`` replaces all of
        these with one uniform limit (gradient checks use a large one so fewer
        gradient entries sit at the finite-difference noise floor).
        """
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)
        H = S = config.hidden
        A = config.attention_size
        if scale is None:
            def proj(shape):
                return _glorot(rng, shape, dtype)
        else:
            def proj(shape):
                return rng.uniform(-scale, scale, size=shape).astype(dtype)
        if embeddings is None:
            emb_limit = 0.1 if scale is None else scale
            emb = rng.uniform(-emb_limit, emb_limit, size=(config.vocab_size, config.emb_dim))
            emb[PAD] = 0.0
        else:
            emb = np.array(embeddings.matrix, dtype=np.float64)
            if emb.shape != (config.vocab_size, config.emb_dim):
                raise DimensionError(f"embedding table {emb.shape} does not match config "
                                     f"({config.vocab_size}, {config.emb_dim})")
        encoder = BiEncoderParams.init(config.emb_dim, H, config.enc_layers, rng, dtype=dtype,
                                       scale=scale)
        layers = [LstmLayerParams.init(config.emb_dim + 2 * H if k == 0 else S, S, rng,
                                       f"decoder.l{k}.", dtype, scale)
                  for k in range(config.dec_layers)]
        bridge = [(Parameter(proj((2 * H, S)), f"bridge.l{k}.W"),
                   Parameter(np.zeros(S, dtype=dtype), f"bridge.l{k}.b"))
                  for k in range(config.dec_layers)]
        decoder = DecoderParams(
            layers,
            Parameter(proj((S + 2 * H, config.vocab_size)), "output.W"),
            Parameter(np.zeros(config.vocab_size, dtype=dtype), "output.b"),
            bridge)
        attention = AttentionParams(
            Parameter(proj((S, A)), "attention.W_s"),
            Parameter(proj((2 * H, A)), "attention.W_h"),
            Parameter(proj((A, 1)), "attention.v"))
        return cls(config, Parameter(emb.astype(dtype), "embedding"), encoder, decoder, attention)

    def params(self) -> list[Parameter]:
        return ([self.embedding] + self.encoder.params() + self.decoder.params()
                + self.attention.params())

    @property
    def dtype(self):
        return self.embedding.value.dtype


def save_checkpoint(params: Seq2SeqParams, path, vocab: Vocabulary | None = None) -> None:
    meta = {"kind": "seq2seq", "config": asdict(params.config)}
    if vocab is not None:
        meta["vocab"] = list(vocab.words)
    save_tensors(path, {p.name: p.value for p in params.params()}, meta)


def load_checkpoint(path) -> tuple[Seq2SeqParams, Vocabulary | None]:
    tensors, meta = load_tensors(path)
    config = ModelConfig(**meta["config"])
    params = Seq2SeqParams.init(config, seed=0)
    check_shapes(tensors, {p.name: p.value.shape for p in params.params()})
    for p in params.params():
        p.value = tensors[p.name].astype(config.dtype, copy=True)
        p.grad = np.zeros_like(p.value)
    vocab = Vocabulary.from_words(meta["vocab"]) if "vocab" in meta else None
    return params, vocab


# -- forward pieces ------------------------------------------------------


@dataclass
class EncodedSource:
    annotations: Node     # B x T x 2H
    projected: Node       # B x T x A
    mask: np.ndarray      # B x T
    init_states: list     # per decoder layer (h, c)


def attend(s, annotations, att: AttentionParams, mask=None, tape: Tape | None = None,
           projected=None):
    """Additive attention of state ``s`` over ``annotations``.

    Returns ``(alpha, context)``.  Without a tape ``s`` is a vector or B x S
    array and ``annotations`` a T x 2H or B x T x 2H array.
    """
    if tape is None:
        t = Tape(record=False)
        s = np.asarray(s)
        ann = np.asarray(annotations)
        single = s.ndim == 1
        if single:
            s, ann = s[None, :], ann[None, :, :]
            mask = None if mask is None else np.asarray(mask)[None, :]
        alpha, ctx = attend(t.constant(s), t.constant(ann), att, mask, t)
        return (alpha.value[0], ctx.value[0]) if single else (alpha.value, ctx.value)
    batch, steps = annotations.shape[0], annotations.shape[1]
    if projected is None:
        projected = tape.matmul(annotations, att.W_h)
    ps = tape.reshape(tape.matmul(s, att.W_s), (batch, 1, -1))
    scores = tape.matmul(tape.tanh(tape.add(projected, ps)), att.v)
    alpha = tape.softmax(tape.reshape(scores, (batch, steps)), mask)
    weighted = tape.mul(tape.reshape(alpha, (batch, steps, 1)), annotations)
    return alpha, tape.sum(weighted, axis=1)


def _dropout_fn(tape: Tape, p: float, rng, dtype):
    if rng is None or p <= 0.0:
        return None
    return lambda x: tape.mul(x, tape.constant(dropout_mask(x.shape, p, rng, dtype)))


def encode_source(tape: Tape, params: Seq2SeqParams, src: np.ndarray, src_mask: np.ndarray,
                  dropout: Callable | None = None) -> EncodedSource:
    src = np.asarray(src)
    if src.ndim != 2 or src.shape[1] == 0:
        raise EmptyInputError("source batch must be B x T with T >= 1")
    xs = [tape.gather_rows(params.embedding, src[:, t]) for t in range(src.shape[1])]
    full_mask = bool(np.all(src_mask))
    ann, finals = run_bilstm(tape, params.encoder, xs, None if full_mask else src_mask, dropout)
    annotations = tape.stack(ann, axis=1)
    projected = tape.matmul(annotations, params.attention.W_h)
    zeros = np.zeros((src.shape[0], params.config.hidden), dtype=params.dtype)
    states = []
    for k, (W, b) in enumerate(params.decoder.bridge):
        src_state = finals[min(k, len(finals) - 1)]
        states.append((tape.tanh(tape.affine(src_state, W, b)), tape.constant(zeros)))
    mask = None if full_mask else src_mask
    return EncodedSource(annotations, projected, mask, states)


def decode_step(tape: Tape, params: Seq2SeqParams, y_prev, states, c_prev: Node,
                enc: EncodedSource, dropout: Callable | None = None):
    """One decoder step; returns ``(logits, new_states, context, alpha)``."""
    x = tape.concat([tape.gather_rows(params.embedding, np.asarray(y_prev)), c_prev])
    new_states = []
    for k, (layer, (h, c)) in enumerate(zip(params.decoder.layers, states)):
        if k > 0 and dropout is not None:
            x = dropout(x)
        h, c = lstm_step(x, h, c, layer, tape)
        new_states.append((h, c))
        x = h
    alpha, ctx = attend(x, enc.annotations, params.attention, enc.mask, tape, enc.projected)
    logits = tape.affine(tape.concat([x, ctx]), params.decoder.W_o, params.decoder.b_o)
    return logits, new_states, ctx, alpha


@dataclass
class Batch:
    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]


def make_batch(pairs: Sequence[tuple[Sequence[int], Sequence[int]]], dtype=np.float64) -> Batch:
    """Pad ``(source ids, target ids)`` pairs; EOS is appended to targets."""
    B = len(pairs)
    ts = max(len(s) for s, _ in pairs)
    tt = max(len(t) for _, t in pairs) + 1
    src = np.full((B, ts), PAD, dtype=np.int64)
    src_mask = np.zeros((B, ts), dtype=dtype)
    tgt_in = np.full((B, tt), PAD, dtype=np.int64)
    tgt_out = np.full((B, tt), PAD, dtype=np.int64)
    tgt_mask = np.zeros((B, tt), dtype=dtype)
    for i, (s, t) in enumerate(pairs):
        if len(s) == 0:
            raise EmptyInputError(f"example {i} has an empty source")
        src[i, :len(s)] = s
        src_mask[i, :len(s)] = 1.0
        tgt_in[i, :len(t) + 1] = [BOS] + list(t)
        tgt_out[i, :len(t) + 1] = list(t) + [EOS]
        tgt_mask[i, :len(t) + 1] = 1.0
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask)


def batch_forward(tape: Tape, params: Seq2SeqParams, batch: Batch, dropout_p: float = 0.0,
                  rng: np.random.Generator | None = None):
    """Teacher-forced pass; returns ``(loss node, logits array T x B x V)``."""
    dropout = _dropout_fn(tape, dropout_p, rng, params.dtype)
    enc = encode_source(tape, params, batch.src, batch.src_mask.astype(params.dtype), dropout)
    states = enc.init_states
    ctx = tape.constant(np.zeros((batch.size, 2 * params.config.hidden), dtype=params.dtype))
    logits = []
    for t in range(batch.tgt_in.shape[1]):
        lg, states, ctx, _ = decode_step(tape, params, batch.tgt_in[:, t], states, ctx, enc, dropout)
        logits.append(lg)
    stacked = tape.concat(logits, axis=0)
    loss = tape.cross_entropy(stacked, batch.tgt_out.T.reshape(-1), batch.tgt_mask.T.reshape(-1))
    return loss, stacked.value.reshape(len(logits), batch.size, -1)


def _correct(logits: np.ndarray, batch: Batch) -> tuple[int, int]:
    pred = logits.argmax(axis=-1).T
    mask = batch.tgt_mask > 0
    return int(((pred == batch.tgt_out) & mask).sum()), int(mask.sum())


# uniform init limit for gradient checks; see gradcheck_error
GRADCHECK_SCALE = 1.5


def gradcheck_error(hidden: int = 8, vocab: int = 24, seed: int = 0, steps: int = 5) -> float:
    """Max relative gradient error of a tiny full model (64-bit, dropout off).

    The batch holds two pairs with padded sources and targets of at most
    ``steps`` tokens (EOS included).  The attention ``W_s`` gradient is
    small by construction: ``s @ W_s`` is shared by every source position
    and softmax gradients sum to zero, so only tanh curvature survives.
    A wide init keeps those entries above the finite-difference noise.
    """
    config = ModelConfig(vocab_size=vocab, emb_dim=hidden, hidden=hidden, attention=hidden)
    params = Seq2SeqParams.init(config, seed=seed, scale=GRADCHECK_SCALE)
    rng = np.random.default_rng(seed)
    pairs = [(list(rng.integers(4, vocab, size=steps)), list(rng.integers(4, vocab, size=steps - 2))),
             (list(rng.integers(4, vocab, size=steps - 2)), list(rng.integers(4, vocab, size=steps - 1)))]
    batch = make_batch(pairs)
    return grad_check(lambda tape: batch_forward(tape, params, batch)[0], params.params())


# -- training ------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr0: float = 0.001
    decay: float = 0.5
    dropout: float = 0.35
    epochs: int = 25
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for the zero-based ``epoch``."""
        return self.lr0 * self.decay ** epoch


@dataclass
class EpochLog:
    epoch: int
    loss: float
    token_accuracy: float
    lr: float


def encode_examples(examples, vocab: Vocabulary) -> list[tuple[list[int], list[int]]]:
    return [(encode_ids(ex.source, vocab), encode_ids(ex.expansion, vocab)) for ex in examples]


def train(examples, cfg: TrainConfig, params: Seq2SeqParams, vocab: Vocabulary,
          callback: Callable[[EpochLog], None] | None = None):
    """Teacher-forced SGD with per-epoch learning-rate decay.

    ``examples`` are :class:`~qexpand.dataset.ExpansionExample` records.
    Returns ``(params, logs)``; the logged accuracy is measured on the
    training batches as they are seen (dropout active).
    """
    data = encode_examples(examples, vocab)
    if not data:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    plist = params.params()
    zero_grads(plist)
    logs = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(data))
        loss_sum = 0.0
        hits = total = 0
        for nb, start in enumerate(range(0, len(data), cfg.batch_size)):
            batch = make_batch([data[i] for i in order[start:start + cfg.batch_size]], params.dtype)
            tape = Tape()
            loss, logits = batch_forward(tape, params, batch, cfg.dropout, rng)
            value = float(loss.value)
            if not math.isfinite(value):
                bad = next((p.name for p in plist if not np.all(np.isfinite(p.value))), "none")
                raise NumericFault(f"non-finite loss at epoch {epoch}, batch {nb} "
                                   f"(first non-finite parameter: {bad})")
            tape.backward(loss)
            try:
                sgd_step(plist, lr, cfg.clip_norm)
            except NumericFault as exc:
                raise NumericFault(f"epoch {epoch}, batch {nb}: {exc}") from None
            h, n = _correct(logits, batch)
            hits += h
            total += n
            loss_sum += value * n
        entry = EpochLog(epoch, loss_sum / total, hits / total, lr)
        logs.append(entry)
        log.info("epoch %d loss %.6f acc %.4f lr %g", epoch, entry.loss, entry.token_accuracy, lr)
        if callback is not None:
            callback(entry)
    return params, logs


def write_train_log(logs: Sequence[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "token_accuracy", "lr"])
        for e in logs:
            writer.writerow([e.epoch, repr(e.loss), repr(e.token_accuracy), repr(e.lr)])


def dataset_loss(params: Seq2SeqParams, examples, vocab: Vocabulary, batch_size: int = 32) -> float:
    """Token-weighted teacher-forced loss, dropout off."""
    data = encode_examples(examples, vocab)
    total = weight = 0.0
    for start in range(0, len(data), batch_size):
        batch = make_batch(data[start:start + batch_size], params.dtype)
        loss, _ = batch_forward(Tape(record=False), params, batch)
        n = float(batch.tgt_mask.sum())
        total += float(loss.value) * n
        weight += n
    return total / weight


def token_accuracy(params: Seq2SeqParams, examples, vocab: Vocabulary, batch_size: int = 32) -> float:
    """Fraction of target positions (EOS included) whose teacher-forced argmax is gold."""
    data = encode_examples(examples, vocab)
    if not data:
        raise UndefinedMetricError("token accuracy of an empty dataset")
    hits = total = 0
    for start in range(0, len(data), batch_size):
        batch = make_batch(data[start:start + batch_size], params.dtype)
        _, logits = batch_forward(Tape(record=False), params, batch)
        h, n = _correct(logits, batch)
        hits += h
        total += n
    return hits / total


# -- decoding ------------------------------------------------------------


@dataclass
class DecodeResult:
    generated: list[str]
    attention: np.ndarray           # steps x T
    expansion: list[str]
    step_log_probs: list[float] = field(default_factory=list)
    step_probs: list[float] = field(default_factory=list)


def greedy_decode(params: Seq2SeqParams, src_ids: Sequence[int], max_steps: int = 6):
    """Greedy argmax decoding; returns ``(ids, attention rows, log-probs, probs)``.

    Decoding stops at EOS (scored but not returned) or after ``max_steps``
    steps.
    """
    if len(src_ids) == 0:
        raise EmptyInputError("empty source")
    tape = Tape(record=False)
    src = np.asarray([src_ids], dtype=np.int64)
    enc = encode_source(tape, params, src, np.ones(src.shape, dtype=params.dtype))
    states = enc.init_states
    ctx = tape.constant(np.zeros((1, 2 * params.config.hidden), dtype=params.dtype))
    y = BOS
    ids, rows, logps, probs = [], [], [], []
    for _ in range(max_steps):
        logits, states, ctx, alpha = decode_step(tape, params, [y], states, ctx, enc)
        p = softmax_rows(logits.value)[0]
        lp = log_softmax_rows(logits.value)[0]
        y = int(np.argmax(lp))
        rows.append(alpha.value[0].copy())
        logps.append(float(lp[y]))
        probs.append(float(p[y]))
        if y == EOS:
            break
        ids.append(y)
    return ids, np.array(rows), logps, probs


def sequence_log_probs(params: Seq2SeqParams, src_ids: Sequence[int], tgt_ids: Sequence[int]):
    """Teacher-forced ``log p(y_t | y_<t, x)`` for every position of ``tgt_ids``."""
    batch = make_batch([(list(src_ids), list(tgt_ids))], params.dtype)
    _, logits = batch_forward(Tape(record=False), params, batch)
    lp = log_softmax_rows(logits[:, 0, :])
    targets = list(tgt_ids)
    return [float(lp[t, y]) for t, y in enumerate(targets)]


def strip_expansion(generated: Sequence[str], query_tokens: Sequence[str]) -> list[str]:
    """Drop special tokens, query words (case-folded) and repeats, keeping order."""
    seen = {t.lower() for t in query_tokens}
    out = []
    for tok in generated:
        key = tok.lower()
        if tok in SPECIAL_TOKENS or key in seen:
            continue
        seen.add(key)
        out.append(tok)
    return out


def expand(query: str, params: Seq2SeqParams, vocab: Vocabulary, max_steps: int = 6) -> DecodeResult:
    tokens = tokenize(query)
    if not tokens:
        raise EmptyInputError(f"query {query!r} has no tokens")
    ids, rows, logps, probs = greedy_decode(params, encode_ids(tokens, vocab), max_steps)
    generated = [vocab.tokens[i] for i in ids]
    return DecodeResult(generated, rows, strip_expansion(generated, tokens), logps, probs)


class Expander:
    """Callable text -> expanded text backed by a trained checkpoint."""

    def __init__(self, params: Seq2SeqParams, vocab: Vocabulary, max_steps: int = 6):
        self.params = params
        self.vocab = vocab
        self.max_steps = max_steps
        self._cache: dict[str, list[str]] = {}

    @classmethod
    def from_checkpoint(cls, path, max_steps: int = 6) -> "Expander":
        params, vocab = load_checkpoint(path)
        if vocab is None:
            raise ValueError(f"{path}: checkpoint carries no vocabulary")
        return cls(params, vocab, max_steps)

    def expansion(self, text: str) -> list[str]:
        if text not in self._cache:
            try:
                self._cache[text] = expand(text, self.params, self.vocab, self.max_steps).expansion
            except EmptyInputError:
                self._cache[text] = []
        return self._cache[text]

    def __call__(self, text: str) -> str:
        extra = self.expansion(text)
        return text if not extra else text + " " + " ".join(extra)
