"""Turn labelled sentence pairs into (sentence -> expansion keywords) examples."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .encoder import SentenceEncoder, extract_keywords
from .text import STOPWORDS, tokenize

log = logging.getLogger(__name__)

RELATIONS = frozenset({"entailment", "neutral", "contradiction", "duplicate", "caption"})


class ExampleFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RawPair:
    text_a: str
    text_b: str
    relation: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class ExpansionExample:
    source: tuple[str, ...]
    expansion: tuple[str, ...]

    def check(self, min_len: int = 3, max_len: int = 6) -> None:
        if not min_len <= len(self.expansion) <= max_len:
            raise ExampleFormatError(
                f"expansion has {len(self.expansion)} tokens, expected {min_len}..{max_len}")
        if len(set(self.expansion)) != len(self.expansion):
            raise ExampleFormatError("duplicate expansion tokens")
        src = {t.lower() for t in self.source}
        if any(t.lower() in src for t in self.expansion):
            raise ExampleFormatError("expansion overlaps the source")


@dataclass
class BuildStats:
    pairs_in: int = 0
    dropped_contradiction: int = 0
    dropped_short: int = 0
    dropped_empty: int = 0
    examples_out: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class IngestReport:
    rejected: int = 0
    malformed: int = 0


def ingest(path, fmt: str = "jsonl", report: IngestReport | None = None) -> list[RawPair]:
    """Read ``text_a, text_b, relation`` records from JSONL or TSV.

    Bad records are skipped with a warning and counted in ``report``.
    """
    if fmt not in ("jsonl", "tsv"):
        raise ValueError(f"unsupported pair format {fmt!r}")
    report = report if report is not None else IngestReport()
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                if fmt == "jsonl":
                    rec = json.loads(line)
                    a, b, rel = rec["text_a"], rec["text_b"], rec["relation"]
                else:
                    a, b, rel = line.split("\t")
                if not isinstance(a, str) or not isinstance(b, str) or not isinstance(rel, str):
                    raise TypeError("fields must be strings")
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("%s:%d: malformed record (%s)", path, lineno, exc)
                report.malformed += 1
                continue
            rel = rel.strip().lower()
            if rel not in RELATIONS:
                log.warning("%s:%d: unknown relation %r", path, lineno, rel)
                report.rejected += 1
                continue
            pairs.append(RawPair(a, b, rel))
    return pairs


class KeywordCache:
    """Memoised keyword extraction; pair corpora repeat sentences a lot."""

    def __init__(self, encoder: SentenceEncoder, stopwords=STOPWORDS):
        self.encoder = encoder
        self.stopwords = stopwords
        self._memo: dict[tuple[str, ...], list[str]] = {}

    def __call__(self, tokens: Sequence[str]) -> list[str]:
        key = tuple(tokens)
        if key not in self._memo:
            self._memo[key] = extract_keywords(key, self.encoder, self.stopwords)
        return self._memo[key]


def build(pairs: Iterable[RawPair], keywords, min_len: int = 3, max_len: int = 6):
    """Build expansion examples from ``pairs``.

    ``keywords`` maps a token sequence to its ranked keywords (a
    :class:`KeywordCache`, or any callable with that contract).  Both
    directions of every non-contradiction pair are tried; a direction keeps
    the target's keywords that do not occur in the source, truncated to the
    ``max_len`` best, and is dropped if fewer than ``min_len`` remain.
    """
    examples = []
    stats = BuildStats()
    for pair in pairs:
        stats.pairs_in += 1
        if pair.relation == "contradiction":
            stats.dropped_contradiction += 2
            continue
        ta, tb = tokenize(pair.text_a), tokenize(pair.text_b)
        for src, tgt in ((ta, tb), (tb, ta)):
            if not src or not tgt:
                stats.dropped_empty += 1
                continue
            seen = {t.lower() for t in src}
            kept = [k for k in keywords(tgt) if k.lower() not in seen][:max_len]
            if not kept:
                stats.dropped_empty += 1
            elif len(kept) < min_len:
                stats.dropped_short += 1
            else:
                examples.append(ExpansionExample(tuple(src), tuple(kept)))
                stats.examples_out += 1
    return examples, stats


def write_examples(examples: Iterable[ExpansionExample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for ex in examples:
            fh.write(" ".join(ex.source) + "\t" + " ".join(ex.expansion) + "\n")


def read_examples(path, min_len: int = 3, max_len: int = 6) -> list[ExpansionExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ExampleFormatError(f"{path}:{lineno}: expected 2 tab-separated columns")
            ex = ExpansionExample(tuple(cols[0].split()), tuple(cols[1].split()))
            if not ex.source:
                raise ExampleFormatError(f"{path}:{lineno}: empty source")
            try:
                ex.check(min_len, max_len)
            except ExampleFormatError as exc:
                raise ExampleFormatError(f"{path}:{lineno}: {exc}") from None
            out.append(ex)
    return out


def pair_vocabulary_corpus(pairs: Iterable[RawPair]):
    """Token sequences of every sentence in ``pairs`` (for vocabulary building)."""
    for p in pairs:
        yield tokenize(p.text_a)
        yield tokenize(p.text_b)
