"""Ranking metrics and the answer-preselection evaluation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .retrieval import RankedList, index_build, score_tfidf
from .text import tokenize


class UndefinedMetricError(ValueError):
    pass


def average_precision(ranked: RankedList | Sequence[str], relevant: Iterable[str]) -> float:
    """Sum of precision at each relevant rank, over the number of relevant docs."""
    relevant = set(relevant)
    if not relevant:
        raise UndefinedMetricError("average precision needs at least one relevant document")
    ids = ranked.doc_ids if isinstance(ranked, RankedList) else list(ranked)
    hits = 0
    total = 0.0
    for k, doc in enumerate(ids, start=1):
        if doc in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def per_query_average_precision(runs: Mapping[str, RankedList],
                                qrels: Mapping[str, set]) -> tuple[dict[str, float], int]:
    """AP per judged query (sorted by id) and the number of skipped queries."""
    out = {}
    skipped = 0
    for qid in sorted(runs):
        rel = qrels.get(qid)
        if not rel:
            skipped += 1
            continue
        out[qid] = average_precision(runs[qid], rel)
    if skipped:
        warnings.warn(f"{skipped} run queries have no relevance judgments; skipped")
    return out, skipped


def mean_average_precision(runs: Mapping[str, RankedList], qrels: Mapping[str, set]) -> float:
    aps, _ = per_query_average_precision(runs, qrels)
    if not aps:
        raise UndefinedMetricError("no judged queries")
    return sum(aps.values()) / len(aps)


@dataclass
class PreselectionSet:
    question: str
    candidates: list[str]
    labels: list[int]

    def __post_init__(self):
        if len(self.candidates) != len(self.labels):
            raise ValueError("candidates and labels differ in length")
        if not self.candidates:
            raise ValueError("a preselection set needs at least one candidate")


@dataclass
class PreselectionResult:
    accuracy: float
    coverage: float
    per_query_accuracy: list[float] = field(repr=False)
    per_query_coverage: list[float] = field(repr=False)

    def __iter__(self):
        return iter((self.accuracy, self.coverage))


def rank_candidates(question: str, candidates: Sequence[str]) -> list[int]:
    """Candidate positions by ltc cosine to ``question``; ties keep input order."""
    ids = [f"{i:08d}" for i in range(len(candidates))]
    index = index_build(zip(ids, candidates))
    terms = tokenize(question)
    scores = [score_tfidf(terms, d, index) for d in ids]
    return sorted(range(len(candidates)), key=lambda i: (-scores[i], i))


def preselect(sets: Sequence[PreselectionSet], expander: Callable[[str], str] | None = None,
              k: int = 10, normalization: str = "min_k") -> PreselectionResult:
    """Accuracy@k and coverage@k of TF-IDF preselection.

    ``normalization="min_k"`` divides the relevant hits in the top ``k`` by
    ``min(k, #candidates)``; ``"relevant"`` divides by the number of
    relevant candidates (0 when there are none).
    """
    if normalization not in ("min_k", "relevant"):
        raise ValueError(f"unknown normalization {normalization!r}")
    accs, covs = [], []
    for s in sets:
        question = expander(s.question) if expander is not None else s.question
        top = rank_candidates(question, s.candidates)[:k]
        hits = sum(1 for i in top if s.labels[i] > 0)
        if normalization == "min_k":
            denom = min(k, len(s.candidates))
        else:
            denom = sum(1 for lab in s.labels if lab > 0)
        accs.append(hits / denom if denom else 0.0)
        covs.append(1.0 if hits else 0.0)
    n = len(sets)
    return PreselectionResult(sum(accs) / n if n else 0.0, sum(covs) / n if n else 0.0, accs, covs)


def read_preselection_sets(path) -> list[PreselectionSet]:
    sets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                cands = rec["candidates"]
                sets.append(PreselectionSet(rec["question"], [c["text"] for c in cands],
                                            [int(c["label"]) for c in cands]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad preselection record ({exc})") from None
    return sets
