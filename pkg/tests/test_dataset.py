import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qexpand import fixture_path
from qexpand.dataset import (BuildStats, ExampleFormatError, ExpansionExample, IngestReport,
                             KeywordCache, RawPair, build, ingest, read_examples, write_examples)
from qexpand.text import STOPWORDS, tokenize


class StubEncoder:
    """Counts are a fixed function of the token: len(token), zero for 'zero*'."""

    def counts(self, tokens):
        return np.array([0 if t.startswith("zero") else len(t) for t in tokens])


def _stub_keywords(stopwords=STOPWORDS):
    return KeywordCache(StubEncoder(), stopwords)


def _replay(pairs, stopwords=STOPWORDS, min_len=3, max_len=6):
    """Naive re-implementation of the filter chain."""
    out = []
    for p in pairs:
        if p.relation == "contradiction":
            continue
        for src_text, tgt_text in ((p.text_a, p.text_b), (p.text_b, p.text_a)):
            src, tgt = tokenize(src_text), tokenize(tgt_text)
            score = {}
            first = {}
            for pos, tok in enumerate(tgt):
                n = 0 if tok.startswith("zero") else len(tok)
                score[tok] = score.get(tok, 0) + n
                first.setdefault(tok, pos)
            cands = [t for t in score if score[t] > 0 and t not in stopwords]
            cands.sort(key=lambda t: (-score[t], first[t]))
            kept = [t for t in cands if t not in set(src)][:max_len]
            if min_len <= len(kept):
                out.append(ExpansionExample(tuple(src), tuple(kept)))
    return out


def test_ingest_jsonl_and_tsv(tmp_path):
    j = tmp_path / "p.jsonl"
    j.write_text("\n".join([
        json.dumps({"text_a": "x", "text_b": "y", "relation": "neutral"}),
        json.dumps({"text_a": "x", "text_b": "y", "relation": "contradiction"}),
        json.dumps({"text_a": "x", "text_b": "y", "relation": "banana"}),
        "{not json",
        json.dumps({"text_a": "x", "relation": "neutral"}),
    ]) + "\n")
    report = IngestReport()
    pairs = ingest(j, "jsonl", report)
    assert pairs == [RawPair("x", "y", "neutral"), RawPair("x", "y", "contradiction")]
    assert report.rejected == 1 and report.malformed == 2

    t = tmp_path / "p.tsv"
    t.write_text("a b\tc d\tCaption\nonly\ttwo\n")
    report = IngestReport()
    assert ingest(t, "tsv", report) == [RawPair("a b", "c d", "caption")]
    assert report.malformed == 1


def test_ingest_missing_file_and_bad_format(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "nope.jsonl")
    with pytest.raises(ValueError):
        ingest(tmp_path / "nope.jsonl", "csv")


def test_raw_pair_relation_closed_set():
    with pytest.raises(ValueError):
        RawPair("a", "b", "banana")


def test_identical_pair_drops_both_directions():
    text = "museum painting gallery artist sculpture"
    examples, stats = build([RawPair(text, text, "duplicate")], _stub_keywords())
    assert examples == []
    assert stats.dropped_empty == 2


def test_build_matches_naive_replay():
    pairs = [
        RawPair("The old parade goes through town", "A picture of an old parade in a big town",
                "caption"),
        RawPair("coach striker stadium", "referee tournament champion league marathon cricket "
                "goalkeeper", "entailment"),
        RawPair("vote ballot", "senator zeroed minister", "neutral"),
        RawPair("bank merger investor", "telescope genome molecule", "contradiction"),
        RawPair("", "anything at all goes here", "neutral"),
    ]
    examples, stats = build(pairs, _stub_keywords())
    assert examples == _replay(pairs)
    # six best by length, ties by position; "league" is cut
    by_src = {ex.source: ex.expansion for ex in examples}
    assert by_src[("coach", "striker", "stadium")] == (
        "tournament", "goalkeeper", "champion", "marathon", "referee", "cricket")
    assert stats.pairs_in == 5 and stats.dropped_contradiction == 2
    assert stats.pairs_in * 2 == (stats.examples_out + stats.dropped_contradiction
                                  + stats.dropped_short + stats.dropped_empty)


def test_overlap_is_case_folded():
    ex, _ = build([RawPair("GALLERY", "gallery museum painting artist", "neutral")],
                  _stub_keywords())
    assert ex[1:] == []
    assert ex[0].expansion == ("painting", "museum", "artist")


def test_filter_locality_on_fixture():
    pairs = ingest(fixture_path("pairs.jsonl"))
    kw = _stub_keywords()
    full, _ = build(pairs, kw)
    clean, _ = build([p for p in pairs if p.relation != "contradiction"], kw)
    assert full == clean


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.text("abcde ", max_size=30), st.text("abcde ", max_size=30),
                          st.sampled_from(sorted({"entailment", "neutral", "contradiction",
                                                  "duplicate", "caption"}))), max_size=8))
def test_stats_conservation(raw):
    pairs = [RawPair(*r) for r in raw]
    examples, stats = build(pairs, _stub_keywords(frozenset()), min_len=2, max_len=3)
    assert stats.pairs_in * 2 == (stats.examples_out + stats.dropped_contradiction
                                  + stats.dropped_short + stats.dropped_empty)
    assert len(examples) == stats.examples_out
    for ex in examples:
        ex.check(2, 3)


def test_stats_json_has_five_counters():
    assert set(json.loads(BuildStats().to_json())) == {
        "pairs_in", "dropped_contradiction", "dropped_short", "dropped_empty", "examples_out"}


def test_examples_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(40)]
    exs = []
    for _ in range(100):
        picked = rng.choice(40, size=rng.integers(4, 13), replace=False)
        n_exp = int(rng.integers(3, 7))
        exs.append(ExpansionExample(tuple(words[i] for i in picked[n_exp:]) or ("src",),
                                    tuple(words[i] for i in picked[:n_exp])))
    write_examples(exs, tmp_path / "d.tsv")
    assert read_examples(tmp_path / "d.tsv") == exs


def test_read_examples_rejects_bad_lines(tmp_path):
    f = tmp_path / "bad.tsv"
    f.write_text("a b\tc d e\nx\tq w e r t y u\n")
    with pytest.raises(ExampleFormatError, match="bad.tsv:2"):
        read_examples(f)
    f.write_text("only one column\n")
    with pytest.raises(ExampleFormatError, match=":1"):
        read_examples(f)
    f.write_text("a b\ta c d\n")
    with pytest.raises(ExampleFormatError, match="overlap"):
        read_examples(f)
    (tmp_path / "empty.tsv").write_text("")
    assert read_examples(tmp_path / "empty.tsv") == []
