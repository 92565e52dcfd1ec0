"""Train a small expansion model and expand a few queries.

Uses demos/out/data.tsv from 02_build_dataset.py.  The sizes and the
learning rate are far from the full-scale defaults so the run finishes in
about a minute on a laptop CPU.  Writes demos/out/model.ckpt.
"""
from pathlib import Path

from qexpand.dataset import read_examples
from qexpand.model import (ModelConfig, Seq2SeqParams, TrainConfig, expand, save_checkpoint,
                           train, write_train_log)
from qexpand.text import build_vocab, random_embeddings

OUT = Path(__file__).parent / "out"
examples = read_examples(OUT / "data.tsv")
vocab = build_vocab(list(e.source) + list(e.expansion) for e in examples)
emb = random_embeddings(vocab, 32, seed=1)

params = Seq2SeqParams.init(ModelConfig(vocab_size=len(vocab), emb_dim=32, hidden=32),
                            seed=0, embeddings=emb)
cfg = TrainConfig(batch_size=8, lr0=1.0, decay=0.95, dropout=0.1, epochs=15, seed=0)
print(f"{len(examples)} examples, vocabulary {len(vocab)}")
params, logs = train(examples, cfg, params, vocab,
                     callback=lambda e: print(f"epoch {e.epoch:2d}  loss {e.loss:.4f}  "
                                              f"acc {e.token_accuracy:.4f}  lr {e.lr:.4f}"))
write_train_log(logs, OUT / "train.csv")
save_checkpoint(params, OUT / "model.ckpt", vocab)

for query in ["campaign coalition", "marathon match", "journalist broadcast",
              "fossil telescope", "bank startup"]:
    res = expand(query, params, vocab)
    print(f"{query!r:24s} generated {res.generated} -> expansion {res.expansion}")
