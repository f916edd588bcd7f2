"""Regenerate the logit batches bundled in src/hevote/data with their oracle labels."""

import json
from pathlib import Path

import numpy as np

from hevote.ensemble import LogitBatch, Example, make_synthetic_batch, oracle_vote

DATA = Path(__file__).resolve().parents[1] / "src" / "hevote" / "data"
GRID = [(m, n) for m in (1, 3, 5, 40) for n in (2, 4, 256)]


def rounded(batch: LogitBatch, decimals: int = 5) -> LogitBatch:
    exs = tuple(Example(e.id, np.round(e.logits, decimals)) for e in batch.examples)
    return LogitBatch(batch.m, batch.n, batch.bounds, exs)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    labels = {}
    sample = rounded(make_synthetic_batch(3, 4, 8, seed=7, id_prefix="sample-"), 3)
    (DATA / "sample_batch.json").write_text(json.dumps(sample.to_dict(), indent=1) + "\n")
    labels["sample_batch.json"] = oracle_vote(sample)
    for k, (m, n) in enumerate(GRID):
        count = 8 if n == 256 and m == 40 else 16
        batch = rounded(make_synthetic_batch(m, n, count, seed=100 + k, id_prefix=f"m{m}n{n}-"))
        name = f"synthetic_m{m}_n{n}.json"
        (DATA / name).write_text(json.dumps(batch.to_dict()) + "\n")
        labels[name] = oracle_vote(batch)
    (DATA / "labels.json").write_text(json.dumps(labels, indent=1) + "\n")


if __name__ == "__main__":
    main()
