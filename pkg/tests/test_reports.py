from kgembed.reports import curves_table, null_histogram_table, read_records, record, results_table, write_records

import numpy as np


def test_results_table_best_over_dimensions(tmp_path):
    recs = [record("classify", "node2vec", 20, "accuracy", 0.5), record("classify", "node2vec", 50, "accuracy", 0.7),
            record("similarity", "poincare", 5, "power", 0.9, dataset="D1", similarity="cosine"),
            record("similarity", "poincare", 5, "power", 0.95, dataset="D1", similarity="poincare")]
    write_records(recs, tmp_path / "r.json")
    assert read_records(tmp_path / "r.json") == recs
    lines = results_table(recs).splitlines()
    assert lines[0] == "task\tnode2vec\tpoincare"
    assert lines[1] == "Node Classification\t0.7000\tNA"
    assert lines[3] == "Concept Similarity (D1)\tNA\t0.9000"


def test_curves_and_histogram():
    recs = [record("links", "node2vec", d, "accuracy", d / 100) for d in (50, 20)]
    rows = curves_table(recs).splitlines()
    assert [r.split("\t")[5] for r in rows[1:]] == ["20", "50"]
    hist = null_histogram_table([("m", 5, "D1", np.random.default_rng(0).uniform(-1, 1, 500))], bins=10)
    lines = hist.splitlines()
    assert len(lines) == 11
    widths = [float(ln.split("\t")[4]) - float(ln.split("\t")[3]) for ln in lines[1:]]
    assert abs(sum(float(ln.split("\t")[5]) * w for ln, w in zip(lines[1:], widths)) - 1.0) < 1e-3
