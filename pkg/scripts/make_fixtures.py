"""Regenerate the synthetic fixtures shipped in ``src/qexpand/fixtures``.

The fixtures mimic the shape of the real corpora (NLI-style sentence pairs,
a judged document collection, WikiQA-style answer sets, topical headlines)
over a small seven-topic vocabulary.  Output is fully determined by SEED.

    python scripts/make_fixtures.py
"""

import json
import random
from pathlib import Path

SEED = 2018
OUT = Path(__file__).resolve().parents[1] / "src" / "qexpand" / "fixtures"

TOPICS = {
    "culture": "museum painting artist gallery theatre novel poet opera festival sculpture "
               "concert exhibition film actor ballet",
    "sport": "football match goal league coach player stadium tennis referee season "
             "champion tournament striker cricket marathon",
    "world": "embassy border refugee treaty diplomat conflict ceasefire sanctions summit "
             "ambassador island province frontier capital migration",
    "politics": "election parliament minister vote senator campaign ballot policy party "
                "president governor reform coalition debate legislation",
    "business": "market company profit investor shares bank merger revenue startup "
                "economy factory retail inflation stock earnings",
    "science": "laboratory research physics biology experiment telescope genome molecule "
               "climate fossil vaccine planet chemistry neuron satellite",
    "media": "newspaper journalist television broadcast editor radio podcast magazine "
             "headline reporter channel interview publisher column documentary",
}
TOPIC_WORDS = {k: v.split() for k, v in TOPICS.items()}
FILLERS = ["the", "a", "of", "in", "with", "and", "is", "on", "for", "by", "at", "this"]
SHARED = ["new", "old", "big", "local", "young", "famous", "small", "public"]


def sentence(rng, topic, n_content=None):
    words = TOPIC_WORDS[topic]
    n_content = n_content or rng.randint(3, 5)
    content = rng.sample(words, n_content)
    out = []
    for w in content:
        if rng.random() < 0.6:
            out.append(rng.choice(FILLERS))
        if rng.random() < 0.25:
            out.append(rng.choice(SHARED))
        out.append(w)
    text = " ".join(out)
    return text[0].upper() + text[1:] + rng.choice([".", "", " !", "?"])


def make_pairs(rng, n=1000):
    topics = sorted(TOPIC_WORDS)
    related = ["entailment", "neutral", "duplicate", "caption"]
    recs = []
    for _ in range(n):
        t = rng.choice(topics)
        if rng.random() < 0.2:
            other = rng.choice([x for x in topics if x != t])
            recs.append({"text_a": sentence(rng, t), "text_b": sentence(rng, other),
                         "relation": "contradiction"})
        else:
            recs.append({"text_a": sentence(rng, t), "text_b": sentence(rng, t, rng.randint(4, 6)),
                         "relation": rng.choice(related)})
    return recs


def make_ir(rng, n_docs=20, n_queries=8):
    topics = sorted(TOPIC_WORDS)
    docs, qrels, queries = [], [], []
    doc_topic = {}
    for i in range(n_docs):
        t = topics[i % len(topics)]
        did = f"d{i:02d}"
        doc_topic[did] = t
        docs.append({"id": did, "text": " ".join(sentence(rng, t, 5) for _ in range(2))})
    for q in range(n_queries):
        t = topics[q % len(topics)]
        qid = f"q{q + 1}"
        queries.append((qid, " ".join(rng.sample(TOPIC_WORDS[t], 2))))
        for did, dt in doc_topic.items():
            qrels.append(f"{qid} 0 {did} {1 if dt == t else 0}")
    return docs, queries, qrels


def make_preselection(rng, n_sets=30):
    topics = sorted(TOPIC_WORDS)
    sets = []
    for _ in range(n_sets):
        t = rng.choice(topics)
        n_cand = rng.randint(3, 14)
        n_rel = rng.randint(0, 2) if rng.random() < 0.1 else rng.randint(1, 3)
        cands = [{"text": sentence(rng, t), "label": 1} for _ in range(min(n_rel, n_cand))]
        while len(cands) < n_cand:
            other = rng.choice(topics)
            cands.append({"text": sentence(rng, other), "label": 0})
        rng.shuffle(cands)
        question = "What about " + " ".join(rng.sample(TOPIC_WORDS[t], 2)) + "?"
        sets.append({"question": question, "candidates": cands})
    return sets


def make_classification(rng, n_train=350, n_test=70):
    topics = sorted(TOPIC_WORDS)

    def rows(n):
        out = []
        for _ in range(n):
            t = rng.choice(topics)
            out.append(f"{t}\t{sentence(rng, t, rng.randint(2, 3))}")
        return out

    return rows(n_train), rows(n_test)


def main():
    rng = random.Random(SEED)
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "pairs.jsonl", "w") as fh:
        for rec in make_pairs(rng):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    docs, queries, qrels = make_ir(rng)
    with open(OUT / "docs.jsonl", "w") as fh:
        for d in docs:
            fh.write(json.dumps(d, sort_keys=True) + "\n")
    (OUT / "queries.tsv").write_text("".join(f"{q}\t{t}\n" for q, t in queries))
    (OUT / "qrels.txt").write_text("\n".join(qrels) + "\n")
    with open(OUT / "preselect.jsonl", "w") as fh:
        for s in make_preselection(rng):
            fh.write(json.dumps(s, sort_keys=True) + "\n")
    train, test = make_classification(rng)
    (OUT / "classify_train.tsv").write_text("\n".join(train) + "\n")
    (OUT / "classify_test.tsv").write_text("\n".join(test) + "\n")


if __name__ == "__main__":
    main()
