import numpy as np
import pytest
from hypothesis import given, strategies as st

from qexpand import fixture_path
from qexpand.metrics import (PreselectionSet, UndefinedMetricError, average_precision,
                             mean_average_precision, per_query_average_precision, preselect,
                             rank_candidates, read_preselection_sets)
from qexpand.retrieval import RankedList


def _naive_ap(ranking, relevant):
    # precision at each cutoff recomputed from scratch
    total = 0.0
    for k in range(1, len(ranking) + 1):
        if ranking[k - 1] in relevant:
            prefix = ranking[:k]
            total += len([d for d in prefix if d in relevant]) / len(prefix)
    return total / len(relevant)


def test_ap_cases():
    assert average_precision(["r1", "r2", "n"], {"r1", "r2"}) == 1.0
    assert average_precision(["n1", "n2"], {"r"}) == 0.0
    assert average_precision(["r1", "n", "r2"], {"r1", "r2", "r3"}) == pytest.approx(
        (1 + 2 / 3) / 3, abs=1e-15)
    with pytest.raises(UndefinedMetricError):
        average_precision(["a"], set())


def test_ap_matches_naive_on_random_rankings():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        ranking = [f"d{i}" for i in rng.permutation(40)[:n]]
        relevant = {f"d{i}" for i in rng.choice(40, size=rng.integers(1, 10), replace=False)}
        assert abs(average_precision(ranking, relevant) - _naive_ap(ranking, relevant)) <= 1e-12


def _run(qid, ids):
    return RankedList(qid, [(d, float(-i)) for i, d in enumerate(ids)])


def test_map_cases():
    runs = {"a": _run("a", ["x", "y"]), "b": _run("b", ["n", "r"])}
    qrels = {"a": {"x"}, "b": {"r"}}
    assert mean_average_precision(runs, qrels) == 0.75
    assert mean_average_precision({"a": runs["a"]}, qrels) == 1.0
    with pytest.warns(UserWarning, match="1 run queries"):
        aps, skipped = per_query_average_precision({**runs, "c": _run("c", ["x"])}, qrels)
    assert skipped == 1 and set(aps) == {"a", "b"}


@given(st.permutations(range(6)))
def test_map_invariant_to_query_order(perm):
    rng = np.random.default_rng(1)
    runs, qrels = {}, {}
    for q in range(6):
        runs[f"q{q}"] = _run(f"q{q}", [f"d{i}" for i in rng.permutation(10)])
        qrels[f"q{q}"] = {f"d{i}" for i in rng.choice(10, size=3, replace=False)}
    ref = mean_average_precision(runs, qrels)
    shuffled = {f"q{q}": runs[f"q{q}"] for q in perm}
    assert mean_average_precision(shuffled, qrels) == ref


def test_preselect_hand_cases():
    one = PreselectionSet("red apple", ["red apple pie", "blue sky", "green field"], [1, 0, 0])
    res = preselect([one])
    assert res.per_query_accuracy == [pytest.approx(1 / 3)] and res.coverage == 1.0
    assert preselect([one], normalization="relevant").accuracy == 1.0
    none = PreselectionSet("red apple", ["red apple pie", "blue sky"], [0, 0])
    assert tuple(preselect([none])) == (0.0, 0.0)
    assert tuple(preselect([none], normalization="relevant")) == (0.0, 0.0)


def test_preselect_top_k_cut():
    cands = [f"alpha filler{i}" for i in range(12)] + ["beta"]
    labels = [0] * 12 + [1]
    s = PreselectionSet("beta", cands, labels)
    assert preselect([s], k=10).coverage == 1.0
    assert preselect([s], k=10).accuracy == pytest.approx(0.1)
    # the relevant item scores 0 for this question, so it falls out of the top 10
    s2 = PreselectionSet("alpha", cands, labels)
    assert preselect([s2], k=10).coverage == 0.0


def test_rank_candidates_tie_keeps_order():
    assert rank_candidates("zzz", ["a", "b", "c"]) == [0, 1, 2]


def test_identity_expander_equals_none():
    sets = read_preselection_sets(fixture_path("preselect.jsonl"))
    assert len(sets) == 30
    assert tuple(preselect(sets, lambda q: q)) == tuple(preselect(sets))


def test_read_preselection_errors(tmp_path):
    (tmp_path / "p.jsonl").write_text('{"question": "q", "candidates": []}\n')
    with pytest.raises(ValueError, match=":1"):
        read_preselection_sets(tmp_path / "p.jsonl")
