"""MAP on the bundled document collection, with and without expansion.

Needs demos/out/model.ckpt (run 03_train_and_expand.py first).  The
collection is tiny, so the paired t-test has little power; the point is
the plumbing, not the numbers.
"""
from pathlib import Path

from qexpand import fixture_path
from qexpand.metrics import per_query_average_precision
from qexpand.model import Expander
from qexpand.retrieval import index_build, read_docs_jsonl, read_qrels, read_queries, search
from qexpand.stats import paired_ttest

OUT = Path(__file__).parent / "out"
if not (OUT / "model.ckpt").exists():
    raise SystemExit("no demos/out/model.ckpt; run 03_train_and_expand.py first")
index = index_build(read_docs_jsonl(fixture_path("docs.jsonl")))
queries = read_queries(fixture_path("queries.tsv"))
qrels = read_qrels(fixture_path("qrels.txt"))
expander = Expander.from_checkpoint(OUT / "model.ckpt")

for qid, text in queries:
    print(f"{qid}: {text!r} -> {expander(text)!r}")

for scheme in ("tfidf", "bm25"):
    base = {q: search(t, index, scheme, 1000, q) for q, t in queries}
    qe = {q: search(expander(t), index, scheme, 1000, q) for q, t in queries}
    ap, _ = per_query_average_precision(base, qrels)
    ap_qe, _ = per_query_average_precision(qe, qrels)
    keys = sorted(ap)
    a = [ap_qe[k] for k in keys]
    b = [ap[k] for k in keys]
    mean_b, mean_a = sum(b) / len(b), sum(a) / len(a)
    try:
        test = paired_ttest(a, b)
        sig = f"t={test.t:.3f} p={test.p:.3f}"
    except ValueError as exc:
        sig = f"no test ({exc})"
    print(f"{scheme:6s} MAP {mean_b:.4f} -> {mean_a:.4f}  {sig}")
