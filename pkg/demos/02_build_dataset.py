"""Turn the bundled sentence pairs into (sentence -> keywords) examples.

Contradiction pairs are dropped, both directions of every other pair are
tried, keywords already present in the source are removed and targets are
cut to the six best.  Writes demos/out/data.tsv for the next demo.
"""
from pathlib import Path

from qexpand import fixture_path
from qexpand.dataset import (IngestReport, KeywordCache, build, ingest, pair_vocabulary_corpus,
                             write_examples)
from qexpand.encoder import SentenceEncoder
from qexpand.text import STOPWORDS, build_vocab

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

report = IngestReport()
pairs = ingest(fixture_path("pairs.jsonl"), "jsonl", report)
print(f"{len(pairs)} pairs read ({report.rejected} rejected, {report.malformed} malformed)")

vocab = build_vocab(pair_vocabulary_corpus(pairs))
encoder = SentenceEncoder.random(vocab, seed=10, hidden=64, emb_dim=50)
examples, stats = build(pairs, KeywordCache(encoder, STOPWORDS))
print(stats.to_json())

for ex in examples[:8]:
    print(" ".join(ex.source), "->", " ".join(ex.expansion))

write_examples(examples, OUT / "data.tsv")
encoder.save(OUT / "encoder.ckpt")
print("wrote", OUT / "data.tsv")
