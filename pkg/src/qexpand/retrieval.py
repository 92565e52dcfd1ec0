"""Inverted index with BM25 and ltc-cosine TF-IDF ranking."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .text import tokenize


class IndexBuildError(ValueError):
    pass


@dataclass
class InvertedIndex:
    doc_ids: list[str]
    doc_tf: dict[str, Counter]
    df: dict[str, int] = field(init=False)
    postings: dict[str, list[tuple[str, int]]] = field(init=False)
    doc_len: dict[str, int] = field(init=False)
    avgdl: float = field(init=False)
    _norms: dict[str, float] = field(init=False, repr=False)

    def __post_init__(self):
        self.postings = {}
        for d in self.doc_ids:
            for term, tf in self.doc_tf[d].items():
                self.postings.setdefault(term, []).append((d, tf))
        self.df = {t: len(p) for t, p in self.postings.items()}
        self.doc_len = {d: sum(self.doc_tf[d].values()) for d in self.doc_ids}
        self.avgdl = sum(self.doc_len.values()) / self.N if self.N else 0.0
        self._norms = {}

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    def idf_bm25(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def idf_ltc(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(self.N / df) if df else 0.0

    def doc_norm(self, doc_id: str) -> float:
        if doc_id not in self._norms:
            self._norms[doc_id] = math.sqrt(sum(
                ((1.0 + math.log(tf)) * self.idf_ltc(t)) ** 2 for t, tf in self.doc_tf[doc_id].items()))
        return self._norms[doc_id]

    def to_json(self) -> str:
        docs = [{"id": d, "tf": dict(sorted(self.doc_tf[d].items()))} for d in self.doc_ids]
        return json.dumps({"schema_version": 1, "docs": docs}, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "InvertedIndex":
        data = json.loads(text)
        return cls([d["id"] for d in data["docs"]],
                   {d["id"]: Counter(d["tf"]) for d in data["docs"]})


def index_build(docs: Iterable[tuple[str, str]]) -> InvertedIndex:
    ids, tfs = [], {}
    for doc_id, text in docs:
        if doc_id in tfs:
            raise IndexBuildError(f"duplicate document id {doc_id!r}")
        ids.append(doc_id)
        tfs[doc_id] = Counter(tokenize(text))
    return InvertedIndex(ids, tfs)


def _lookup(index: InvertedIndex, doc_id: str) -> Counter:
    try:
        return index.doc_tf[doc_id]
    except KeyError:
        raise KeyError(f"unknown document id {doc_id!r}") from None


def score_bm25(query: Sequence[str], doc_id: str, index: InvertedIndex,
               k1: float = 1.2, b: float = 0.75) -> float:
    tfs = _lookup(index, doc_id)
    norm = k1 * (1.0 - b + b * index.doc_len[doc_id] / index.avgdl) if index.avgdl else k1
    score = 0.0
    for term in query:
        tf = tfs.get(term, 0)
        if tf:
            score += index.idf_bm25(term) * tf * (k1 + 1.0) / (tf + norm)
    return score


def score_tfidf(query: Sequence[str], doc_id: str, index: InvertedIndex) -> float:
    """Cosine between ltc-weighted query and document vectors."""
    tfs = _lookup(index, doc_id)
    qw = {t: (1.0 + math.log(n)) * index.idf_ltc(t) for t, n in Counter(query).items()}
    qnorm = math.sqrt(sum(w * w for w in qw.values()))
    dnorm = index.doc_norm(doc_id)
    if qnorm == 0.0 or dnorm == 0.0:
        return 0.0
    dot = 0.0
    for t in sorted(qw):
        tf = tfs.get(t, 0)
        if tf:
            dot += qw[t] * (1.0 + math.log(tf)) * index.idf_ltc(t)
    return dot / (qnorm * dnorm)


SCORERS = {"bm25": score_bm25, "tfidf": score_tfidf}


@dataclass
class RankedList:
    query_id: str
    entries: list[tuple[str, float]]

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self):
        return len(self.entries)


def search(query: str | Sequence[str], index: InvertedIndex, scheme: str = "bm25", k: int = 1000,
           query_id: str = "") -> RankedList:
    """Top ``k`` documents sharing a term with the query, best first, ties by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scorer = SCORERS[scheme]
    terms = tokenize(query) if isinstance(query, str) else list(query)
    candidates = set()
    for t in set(terms):
        candidates.update(d for d, _ in index.postings.get(t, ()))
    scored = [(d, scorer(terms, d, index)) for d in candidates]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return RankedList(query_id, scored[:k])


def read_docs_jsonl(path) -> list[tuple[str, str]]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append((str(rec["id"]), rec["text"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad document record ({exc})") from None
    return docs


def read_queries(path) -> list[tuple[str, str]]:
    """``qid TAB text`` lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'qid<TAB>text'")
            out.append((parts[0], parts[1]))
    return out


def read_qrels(path) -> dict[str, set[str]]:
    """TREC ``qid 0 docid rel``; positive ``rel`` marks a relevant document.

    Queries whose judgments are all non-relevant map to an empty set.
    """
    qrels: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns")
            qid, _, doc, rel = parts
            rels = qrels.setdefault(qid, set())
            if int(rel) > 0:
                rels.add(doc)
    return qrels


def write_run(runs: Mapping[str, RankedList], path, tag: str = "qexpand") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ranked in runs.items():
            for rank, (doc, score) in enumerate(ranked.entries, start=1):
                fh.write(f"{qid} Q0 {doc} {rank} {score!r} {tag}\n")


def read_run(path) -> dict[str, RankedList]:
    runs: dict[str, RankedList] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns")
            qid, _, doc, _, score, _ = parts
            runs.setdefault(qid, RankedList(qid, [])).entries.append((doc, float(score)))
    return runs
