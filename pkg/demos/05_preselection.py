"""Answer preselection: accuracy and coverage of the top 10 candidates.

Each question ranks its own candidate answers by TF-IDF cosine.  Accuracy
divides the relevant hits by min(10, #candidates); the alternative
normalization (by #relevant) is shown too.
"""
from pathlib import Path

from qexpand import fixture_path
from qexpand.metrics import preselect, read_preselection_sets
from qexpand.model import Expander

OUT = Path(__file__).parent / "out"
sets = read_preselection_sets(fixture_path("preselect.jsonl"))
expander = Expander.from_checkpoint(OUT / "model.ckpt") if (OUT / "model.ckpt").exists() else None

for norm in ("min_k", "relevant"):
    acc, cov = preselect(sets, None, 10, norm)
    line = f"{norm:8s} without QE: accuracy {acc:.4f} coverage {cov:.4f}"
    if expander is not None:
        acc_qe, cov_qe = preselect(sets, expander, 10, norm)
        line += f" | with QE: accuracy {acc_qe:.4f} coverage {cov_qe:.4f}"
    print(line)
