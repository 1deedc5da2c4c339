"""Standalone word2vec text reader that shares no code with the package."""
import numpy as np


def read_w2v(path):
    with open(path, encoding="utf-8") as fh:
        count, dim = (int(x) for x in fh.readline().split())
        words, rows = [], []
        for line in fh:
            fields = line.rstrip("\n").split(" ")
            assert len(fields) == dim + 1, f"row has {len(fields) - 1} values, header says {dim}"
            words.append(fields[0])
            rows.append(np.array(fields[1:], dtype=np.float64))
    assert len(words) == count, f"header says {count} rows, found {len(words)}"
    return words, np.vstack(rows) if rows else np.zeros((0, dim))
