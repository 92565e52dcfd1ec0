"""Keyword extraction by max-pool selection counts.

A BiLSTM encodes the sentence; for every pooled dimension the max-pool
picks one time step.  Tokens picked most often are the keywords.  The
weights here are random, so the ranking only illustrates the mechanism.
"""
from qexpand.encoder import SentenceEncoder, extract_keywords, keyword_counts
from qexpand.text import STOPWORDS, build_vocab, tokenize

sentence = "A picture of an old parade going through a town"
tokens = tokenize(sentence)
vocab = build_vocab([tokens])

for seed in (0, 1, 2):
    encoder = SentenceEncoder.random(vocab, seed=seed, hidden=100, emb_dim=50)
    annotations, pooled = encoder.encode_tokens(tokens)
    counts = keyword_counts(annotations)
    print(f"encoder seed {seed}: annotations {annotations.shape}, counts sum {counts.sum()}")
    for tok, n in zip(tokens, counts):
        print(f"    {tok:10s} {n:4d}")
    print("    keywords:", extract_keywords(tokens, encoder, STOPWORDS, max_k=4))
