"""Config-driven pipeline: ingest → walk → train → evaluate → report.

Configuration is TOML. Top-level keys ``output_dir``, ``seed``, ``workers`` and
``stages``; one table per stage section (``ingest``, ``walk``, ``sgns``,
``poincare``, ``eval``, ``patient``). Every output is written under
``output_dir`` and recorded in ``manifest.json`` with its SHA-256.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import evaluation as ev
from . import patient as pt
from .embeddings import HYPERBOLIC, EmbeddingTable
from .errors import ConfigError, StageError
from .graph import build_graph, load_snapshot, save_snapshot
from .ingest import SEMANTIC_GROUPS, ingest_directory
from .poincare import PoincareConfig, poincare_train
from .reports import curves_table, null_histogram_table, read_records, record, results_table, write_records
from .sgns import SgnsConfig, sgns_train
from .walks import METAPATH, NODE2VEC, Metapath, WalkConfig, WalkCorpus, generate_corpus

logger = logging.getLogger(__name__)

STAGES = ("ingest", "walk", "train-sgns", "train-poincare", "eval-classify", "eval-links",
          "eval-similarity", "eval-patient", "report")
EVAL_STAGES = ("eval-classify", "eval-links", "eval-similarity", "eval-patient")

DEFAULTS: dict[str, Any] = {
    "output_dir": "output",
    "seed": 0,
    "workers": 1,
    "stages": list(STAGES),
    "ingest": {
        "rrf_dir": "",
        "groups": sorted(SEMANTIC_GROUPS),
        "sources": [],
        "semantic_group_table": "",
    },
    "walk": {
        "engines": [NODE2VEC],
        "walks_per_node": 10,
        "walk_length": 20,
        "p": 1.0,
        "q": 1.0,
        "relation_weights": {},
        "metapath": ["DISO", "CHEM", "DISO"],
        "metapath_walks_per_node": 20,
        "metapath_walk_length": 5,
    },
    "sgns": {
        "dimensions": [100],
        "window": 5,
        "negatives": 5,
        "epochs": 5,
        "initial_lr": 0.025,
        "unigram_power": 0.75,
    },
    "poincare": {
        "enabled": True,
        "dimensions": [100],
        "epochs": 50,
        "learning_rate": 0.1,
        "burn_in_epochs": 10,
        "burn_in_lr_divisor": 10.0,
        "negatives": 10,
        "l2_coefficient": 1e-5,
        "ball_epsilon": 1e-5,
    },
    "eval": {
        "train_fraction": 0.8,
        "classify_label": "semantic_type",
        "link_sample_fraction": 0.02,
        "bootstrap_count": 10000,
        "alpha": 0.05,
        "datasets": list(ev.BENCHMARK_NAMES),
    },
    "patient": {
        "cohort": "",
        "code_map": "",
        "code_grouping": "",
        "n_patients": 200,
        "vocabulary_size": 50,
        "rule": "markov",
        "n_states": 5,
        "zipf_exponent": 1.0,
        "min_visits": 4,
        "max_visits": 8,
        "hidden_size": 128,
        "epochs": 20,
        "learning_rate": 2.0,
        "batch_size": 16,
        "train_fraction": 0.8,
        "top_k": 20,
        "rare_min_visits": 5,
    },
}


# ---------------------------------------------------------------- configuration

def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict) and key != "relation_weights":
            if not isinstance(value, dict):
                raise ConfigError(f"{name!r} must be a table")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """Parse ``section.key=value``; the value is read as a TOML literal when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


def set_path(cfg: dict, path: list[str], value) -> None:
    node = cfg
    for part in path[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config section {'.'.join(path[:-1])!r}")
        node = node[part]
    if path[-1] not in node:
        raise ConfigError(f"unknown config key {'.'.join(path)!r}")
    node[path[-1]] = value


def load_config(path=None, overrides: list[str] | None = None, base_dir=None) -> dict:
    """File values over defaults, then ``overrides`` over both.

    Relative paths inside the file resolve against the file's directory.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = _merge(cfg, data)
        base_dir = path.parent if base_dir is None else base_dir
    for item in overrides or []:
        set_path(cfg, *parse_override(item))
    cfg["_base_dir"] = str(base_dir or ".")
    validate_config(cfg)
    return cfg


def _resolve(cfg: dict, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg["_base_dir"]) / path


def _positive_int_list(values, name):
    if not isinstance(values, list) or not values or any(
            not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in values):
        raise ConfigError(f"{name} must be a non-empty list of positive integers")


def stage_configs(cfg: dict) -> dict[str, Any]:
    """Typed per-stage configurations; raises ConfigError on invalid values."""
    seed, workers = cfg["seed"], cfg["workers"]
    w = cfg["walk"]
    try:
        walk = WalkConfig(w["walks_per_node"], w["walk_length"], w["p"], w["q"], seed, workers,
                          w["relation_weights"] or None).validate()
        meta_walk = WalkConfig(w["metapath_walks_per_node"], w["metapath_walk_length"], 1.0, 1.0,
                               seed, workers).validate()
        metapath = Metapath(tuple(w["metapath"]))
        s = cfg["sgns"]
        sgns = [SgnsConfig(d, s["window"], s["negatives"], s["epochs"], s["initial_lr"],
                           s["unigram_power"], seed, workers).validate() for d in s["dimensions"]]
        p = cfg["poincare"]
        poinc = [PoincareConfig(d, p["epochs"], p["learning_rate"], p["burn_in_epochs"],
                                p["burn_in_lr_divisor"], p["negatives"], p["l2_coefficient"],
                                p["ball_epsilon"], seed).validate() for d in p["dimensions"]]
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return {"walk": walk, "metapath_walk": meta_walk, "metapath": metapath, "sgns": sgns, "poincare": poinc}


def validate_config(cfg: dict) -> None:
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    bad = [s for s in cfg["stages"] if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stages: {bad}")
    groups = set(cfg["ingest"]["groups"])
    if not groups or not groups <= SEMANTIC_GROUPS:
        raise ConfigError(f"ingest.groups must be a non-empty subset of {sorted(SEMANTIC_GROUPS)}")
    engines = cfg["walk"]["engines"]
    if not engines or any(e not in (NODE2VEC, METAPATH) for e in engines):
        raise ConfigError("walk.engines must list 'node2vec' and/or 'metapath'")
    _positive_int_list(cfg["sgns"]["dimensions"], "sgns.dimensions")
    _positive_int_list(cfg["poincare"]["dimensions"], "poincare.dimensions")
    e = cfg["eval"]
    if not 0 < e["train_fraction"] < 1:
        raise ConfigError("eval.train_fraction must lie in (0, 1)")
    if not 0 < e["link_sample_fraction"] <= 1:
        raise ConfigError("eval.link_sample_fraction must lie in (0, 1]")
    if not 0 < e["alpha"] < 1 or e["bootstrap_count"] < 1:
        raise ConfigError("eval.alpha must lie in (0, 1) and bootstrap_count be positive")
    if any(d not in ev.BENCHMARK_NAMES for d in e["datasets"]):
        raise ConfigError(f"eval.datasets must be drawn from {list(ev.BENCHMARK_NAMES)}")
    if e["classify_label"] not in ("semantic_type", "semantic_group"):
        raise ConfigError("eval.classify_label must be semantic_type or semantic_group")
    pcfg = cfg["patient"]
    if pcfg["rule"] not in ("markov", "cycle"):
        raise ConfigError("patient.rule must be 'markov' or 'cycle'")
    for key in ("n_patients", "vocabulary_size", "hidden_size", "batch_size", "top_k", "n_states"):
        if not isinstance(pcfg[key], int) or pcfg[key] < 1:
            raise ConfigError(f"patient.{key} must be a positive integer")
    if pcfg["vocabulary_size"] < 2 or pcfg["min_visits"] < 2 or pcfg["max_visits"] < pcfg["min_visits"]:
        raise ConfigError("patient needs vocabulary_size >= 2 and 2 <= min_visits <= max_visits")
    stage_configs(cfg)


# ---------------------------------------------------------------- artifact layout

SNAPSHOT = "graph/snapshot.tsv"
SKIPS = "graph/skip_report.json"
COHORT = "patient/cohort.jsonl"


def corpus_path(engine: str) -> str:
    return f"corpus/{engine}.walks"


def embedding_method(engine: str) -> str:
    return "node2vec" if engine == NODE2VEC else "metapath2vec"


def embedding_path(method: str, dim: int) -> str:
    return f"embeddings/{method}_d{dim}.txt"


def report_path(stage: str) -> str:
    return f"reports/{stage.replace('eval-', '')}.json"


def planned_embeddings(cfg: dict) -> list[tuple[str, int]]:
    out = [(embedding_method(e), d) for e in cfg["walk"]["engines"] for d in cfg["sgns"]["dimensions"]]
    if cfg["poincare"]["enabled"]:
        out += [("poincare", d) for d in cfg["poincare"]["dimensions"]]
    return out


def stage_requirements(stage: str, cfg: dict) -> list[str]:
    if stage == "ingest":
        return []
    if stage in ("walk", "train-poincare"):
        return [SNAPSHOT]
    if stage == "train-sgns":
        return [corpus_path(e) for e in cfg["walk"]["engines"]]
    if stage in EVAL_STAGES:
        return [SNAPSHOT] + [embedding_path(m, d) for m, d in planned_embeddings(cfg)]
    if stage == "report":
        return [report_path(s) for s in EVAL_STAGES]
    raise ConfigError(f"unknown stage {stage!r}")


def stage_products(stage: str, cfg: dict) -> list[str]:
    if stage == "ingest":
        return [SNAPSHOT]
    if stage == "walk":
        return [corpus_path(e) for e in cfg["walk"]["engines"]]
    if stage == "train-sgns":
        return [embedding_path(m, d) for m, d in planned_embeddings(cfg) if m != "poincare"]
    if stage == "train-poincare":
        return [embedding_path(m, d) for m, d in planned_embeddings(cfg) if m == "poincare"]
    if stage in EVAL_STAGES:
        return [report_path(stage)]
    return []


def _kind(rel: str) -> str:
    if rel == SNAPSHOT:
        return "graph"
    if rel.endswith(".json") and not rel.startswith("reports/"):
        return "sidecar"
    if rel.startswith("corpus/"):
        return "corpus"
    if rel.startswith("embeddings/"):
        return "embedding"
    if rel.startswith("reports/") and rel.endswith(".json"):
        return "report"
    if rel.startswith("reports/"):
        return "table"
    return "data"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- stage context

class StageContext:
    """Per-stage staging area; files move into place only when the stage succeeds."""

    def __init__(self, out_dir: Path, stage: str):
        self.out_dir = out_dir
        self.stage = stage
        self.staging = out_dir / ".staging" / stage

    def out(self, rel: str) -> Path:
        p = self.staging / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def src(self, rel: str) -> Path:
        return self.out_dir / rel

    def _staged(self) -> list[str]:
        if not self.staging.exists():
            return []
        return sorted(str(p.relative_to(self.staging)) for p in self.staging.rglob("*") if p.is_file())

    def commit(self) -> list[str]:
        files = self._staged()
        for rel in files:
            dest = self.out_dir / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            (self.staging / rel).replace(dest)
        self._cleanup()
        return files

    def abort(self) -> list[str]:
        files = self._staged()
        for rel in files:
            dest = self.out_dir / (rel + ".partial")
            dest.parent.mkdir(parents=True, exist_ok=True)
            (self.staging / rel).replace(dest)
        self._cleanup()
        return files

    def _cleanup(self):
        shutil.rmtree(self.staging, ignore_errors=True)
        root = self.out_dir / ".staging"
        if root.exists() and not any(root.iterdir()):
            root.rmdir()


# ---------------------------------------------------------------- stages

def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def run_ingest(cfg: dict, ctx: StageContext) -> dict:
    ing = cfg["ingest"]
    if not ing["rrf_dir"]:
        raise ConfigError("ingest.rrf_dir is required for the ingest stage")
    table = _resolve(cfg, ing["semantic_group_table"]) if ing["semantic_group_table"] else None
    concepts, relations, skips = ingest_directory(
        _resolve(cfg, ing["rrf_dir"]), set(ing["groups"]),
        sources=ing["sources"] or None, group_table_path=table)
    graph = build_graph(concepts, relations)
    save_snapshot(graph, ctx.out(SNAPSHOT))
    skips.write(ctx.out(SKIPS))
    logger.info("graph: %s", graph.summary())
    return {"ingest": ing, "graph": graph.summary()}


def _graph(ctx):
    return load_snapshot(ctx.src(SNAPSHOT))


def run_walk(cfg: dict, ctx: StageContext) -> dict:
    graph = _graph(ctx)
    sc = stage_configs(cfg)
    for engine in cfg["walk"]["engines"]:
        if engine == NODE2VEC:
            corpus = generate_corpus(graph, NODE2VEC, sc["walk"])
        else:
            corpus = generate_corpus(graph, METAPATH, sc["metapath_walk"], sc["metapath"])
        corpus.save(ctx.out(corpus_path(engine)))
        logger.info("%s corpus: %d walks, %d tokens", engine, len(corpus), corpus.num_tokens)
    return {"walk": cfg["walk"]}


def run_train_sgns(cfg: dict, ctx: StageContext) -> dict:
    graph = _graph(ctx)
    cuis = [nd.cui for nd in graph.nodes]
    for engine in cfg["walk"]["engines"]:
        corpus = WalkCorpus.load(ctx.src(corpus_path(engine)))
        for sgns_cfg in stage_configs(cfg)["sgns"]:
            table = sgns_train(corpus, sgns_cfg, cuis)
            table.meta.pop("context_vectors", None)
            table.meta["method"] = embedding_method(engine)
            table.save(ctx.out(embedding_path(embedding_method(engine), sgns_cfg.dimension)))
            logger.info("trained %s d=%d", embedding_method(engine), sgns_cfg.dimension)
    return {"sgns": cfg["sgns"]}


def run_train_poincare(cfg: dict, ctx: StageContext) -> dict:
    graph = _graph(ctx)
    if not cfg["poincare"]["enabled"]:
        return {"poincare": cfg["poincare"]}
    edges = [(r.head, r.tail) for r in graph.relations if r.is_hierarchical]
    cuis = [nd.cui for nd in graph.nodes]
    for pc in stage_configs(cfg)["poincare"]:
        table = poincare_train(edges, graph.num_nodes, pc, cuis)
        table.save(ctx.out(embedding_path("poincare", pc.dimension)))
        logger.info("trained poincare d=%d", pc.dimension)
    return {"poincare": cfg["poincare"]}


def _tables(cfg, ctx):
    for method, dim in planned_embeddings(cfg):
        yield method, dim, EmbeddingTable.load(ctx.src(embedding_path(method, dim)))


def run_eval_classify(cfg, ctx):
    graph = _graph(ctx)
    e = cfg["eval"]
    dataset = ev.ClassificationDataset.from_graph(graph, e["classify_label"])
    records = []
    for method, dim, table in _tables(cfg, ctx):
        acc = ev.classify_nodes(table, dataset, e["train_fraction"], cfg["seed"])
        records.append(record("classify", method, dim, "accuracy", acc,
                              {"train_fraction": e["train_fraction"], "label": e["classify_label"]},
                              cfg["seed"], n_items=len(dataset.items)))
    write_records(records, ctx.out(report_path("eval-classify")))
    return {"eval": e}


def run_eval_links(cfg, ctx):
    graph = _graph(ctx)
    e = cfg["eval"]
    links = ev.build_link_dataset(graph, e["link_sample_fraction"], cfg["seed"])
    records = []
    for method, dim, table in _tables(cfg, ctx):
        rep = ev.link_prediction_report(table, links, e["train_fraction"], cfg["seed"])
        records.append(record("links", method, dim, "accuracy", rep["accuracy"],
                              {"train_fraction": e["train_fraction"],
                               "sample_fraction": e["link_sample_fraction"]},
                              cfg["seed"], threshold=rep["threshold"], n_positives=len(links.positives)))
    write_records(records, ctx.out(report_path("eval-links")))
    return {"eval": e}


def run_eval_similarity(cfg, ctx):
    graph = _graph(ctx)
    e = cfg["eval"]
    sets = ev.build_benchmark_sets(graph)
    records, hist = [], []
    for method, dim, table in _tables(cfg, ctx):
        kinds = ["cosine", "poincare"] if table.geometry == HYPERBOLIC else ["cosine"]
        for name in e["datasets"]:
            ps = sets[name]
            for kind in kinds:
                conf = {"bootstrap_count": e["bootstrap_count"], "alpha": e["alpha"]}
                if not ps.pairs:
                    records.append(record("similarity", method, dim, "power", None, conf, cfg["seed"],
                                          dataset=name, similarity=kind, n_pairs=0))
                    continue
                rep = ev.bootstrap_power(table, ps, e["bootstrap_count"], e["alpha"], cfg["seed"], kind)
                records.append(record("similarity", method, dim, "power", rep.power, conf, cfg["seed"],
                                      dataset=name, similarity=kind, n_pairs=len(ps.pairs),
                                      threshold=rep.threshold, null_quantiles=rep.null_quantiles))
                if kind == "cosine":
                    hist.append((method, dim, name, rep.null_similarities))
    write_records(records, ctx.out(report_path("eval-similarity")))
    ctx.out("reports/null_histograms.tsv").write_text(null_histogram_table(hist))
    return {"eval": e}


def _patient_data(cfg, graph, ctx):
    p = cfg["patient"]
    if p["cohort"]:
        cohort = pt.load_cohort(_resolve(cfg, p["cohort"]))
        if p["code_grouping"]:
            cohort = pt.apply_grouping(cohort, pt.load_code_grouping(_resolve(cfg, p["code_grouping"])))
    else:
        if p["rule"] == "cycle":
            rule = pt.CycleRule(p["n_states"], p["min_visits"], p["max_visits"])
        else:
            rule = pt.ZipfMarkovRule(n_states=p["n_states"], zipf_exponent=p["zipf_exponent"],
                                     min_visits=p["min_visits"], max_visits=p["max_visits"])
        cohort = pt.generate_synthetic_cohort(p["n_patients"], p["vocabulary_size"], rule, cfg["seed"])
        pt.save_cohort(cohort, ctx.out(COHORT))
    m = p["vocabulary_size"]
    if p["code_map"]:
        code_to_cui = {}
        for ln in _resolve(cfg, p["code_map"]).read_text().splitlines():
            parts = ln.split("\t")
            if len(parts) >= 2 and parts[0].isdigit():
                code_to_cui[int(parts[0])] = parts[1]
    else:
        # synthetic codes stand for disorder concepts, cycled when m exceeds them
        pool = [nd.cui for nd in graph.nodes if nd.semantic_group == "DISO"] or [nd.cui for nd in graph.nodes]
        code_to_cui = {i: pool[i % len(pool)] for i in range(m)}
    return cohort, code_to_cui


def run_eval_patient(cfg, ctx):
    graph = _graph(ctx)
    p = cfg["patient"]
    cohort, code_to_cui = _patient_data(cfg, graph, ctx)
    train, test = pt.split_patients(cohort, p["train_fraction"], cfg["seed"])
    objectives = [pt.AllDiagnoses(), pt.FrequentTopK(p["top_k"]), pt.RareTopK(p["top_k"], p["rare_min_visits"])]
    records = []
    for method, dim, table in _tables(cfg, ctx):
        mc = pt.PatientModelConfig(p["vocabulary_size"], dim, p["hidden_size"], p["epochs"],
                                   p["learning_rate"], p["batch_size"], seed=cfg["seed"])
        model = pt.train_patient_model(train, table, mc, code_to_cui)
        for obj in objectives:
            rep = pt.prediction_report(model, test, obj)
            records.append(record("patient", method, dim, obj.name, rep["score"], dataclasses.asdict(mc),
                                  cfg["seed"], k=rep["k"], n_visits_evaluated=rep["n_visits_evaluated"],
                                  final_loss=model.loss_history[-1] if model.loss_history else None))
    write_records(records, ctx.out(report_path("eval-patient")))
    return {"patient": p}


def run_report(cfg, ctx):
    records = []
    for s in EVAL_STAGES:
        records += read_records(ctx.src(report_path(s)))
    ctx.out("reports/table.tsv").write_text(results_table(records))
    ctx.out("reports/curves.tsv").write_text(curves_table(records))
    return {}


RUNNERS: dict[str, Callable[[dict, StageContext], dict]] = {
    "ingest": run_ingest,
    "walk": run_walk,
    "train-sgns": run_train_sgns,
    "train-poincare": run_train_poincare,
    "eval-classify": run_eval_classify,
    "eval-links": run_eval_links,
    "eval-similarity": run_eval_similarity,
    "eval-patient": run_eval_patient,
    "report": run_report,
}


# ---------------------------------------------------------------- orchestration

def check_dependencies(cfg: dict, stages: list[str]) -> None:
    out_dir = _resolve(cfg, cfg["output_dir"])
    produced: set[str] = set()
    for stage in STAGES:
        if stage not in stages:
            continue
        for req in stage_requirements(stage, cfg):
            if req not in produced and not (out_dir / req).exists():
                raise ConfigError(f"stage {stage!r} needs {req}, which is neither on disk nor produced earlier")
        produced.update(stage_products(stage, cfg))
    if "ingest" in stages and not cfg["ingest"]["rrf_dir"]:
        raise ConfigError("ingest.rrf_dir is required for the ingest stage")
    if "ingest" in stages:
        rrf = _resolve(cfg, cfg["ingest"]["rrf_dir"])
        for name in ("MRCONSO.RRF", "MRREL.RRF", "MRSTY.RRF"):
            if not (rrf / name).exists():
                raise ConfigError(f"missing input file {rrf / name}")


def _load_manifest(path: Path) -> dict:
    if path.exists():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError:
            pass
    return {"artifacts": {}, "stages": {}}


def run_pipeline(cfg: dict, stages: list[str] | None = None) -> dict:
    """Run ``stages`` (default: the config's list) in dependency order and write the manifest."""
    stages = list(cfg["stages"] if stages is None else stages)
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stages: {bad}")
    check_dependencies(cfg, stages)
    out_dir = _resolve(cfg, cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    manifest = _load_manifest(manifest_path)
    manifest["seed"] = cfg["seed"]
    manifest["workers"] = cfg["workers"]
    manifest["config"] = _public(cfg)

    for stage in (s for s in STAGES if s in stages):
        ctx = StageContext(out_dir, stage)
        logger.info("stage %s", stage)
        try:
            stage_cfg = RUNNERS[stage](cfg, ctx)
        except ConfigError:
            ctx.abort()
            raise
        except Exception as exc:
            ctx.abort()
            raise StageError(stage, exc) from exc
        for rel in ctx.commit():
            manifest["artifacts"][rel] = {
                "kind": _kind(rel), "stage": stage, "sha256": sha256_file(out_dir / rel)}
        manifest["stages"][stage] = {"config": stage_cfg, "seed": cfg["seed"]}
    manifest["artifacts"] = dict(sorted(manifest["artifacts"].items()))
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_np_default) + "\n")
    return manifest


def _np_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)
