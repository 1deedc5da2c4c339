"""Parsing of pipe-delimited UMLS RRF tables into concept and relation records.

RRF files carry no header row; every line holds a fixed number of fields and a
trailing ``|``. Only the columns needed to build the concept graph are read, by
position.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MalformedLine, RRFEncodingError

logger = logging.getLogger(__name__)

SEMANTIC_GROUPS = frozenset({"ANAT", "CHEM", "DISO", "PROC"})

MRCONSO_COLUMNS = 18
MRREL_COLUMNS = 16
MRSTY_COLUMNS = 6

# column positions
CONSO_CUI, CONSO_LAT, CONSO_SAB, CONSO_CODE, CONSO_STR = 0, 1, 11, 13, 14
REL_CUI1, REL_REL, REL_CUI2, REL_RELA = 0, 3, 4, 7
STY_CUI, STY_TUI, STY_STY = 0, 1, 3


@dataclass(frozen=True)
class ConceptRecord:
    cui: str
    source_code: str
    preferred_name: str
    language: str


@dataclass(frozen=True)
class SemanticTypeRecord:
    cui: str
    semantic_type: str
    semantic_group: str


@dataclass(frozen=True)
class RelationRecord:
    cui_head: str
    cui_tail: str
    relation_type: str
    is_hierarchical: bool

    @classmethod
    def make(cls, head: str, tail: str, relation_type: str) -> "RelationRecord":
        return cls(head, tail, relation_type, relation_type.lower() == "isa")


@dataclass
class SkipReport:
    dropped_concepts: int = 0
    dropped_relations: int = 0
    duplicate_relations: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def parse_rrf_lines(raw: bytes, column_count: int) -> list[list[str]]:
    """Split RRF content into rows of exactly ``column_count`` string fields.

    Empty lines are skipped. Line numbers in errors are 1-based and count every
    physical line.
    """
    if column_count < 1:
        raise ValueError("column_count must be positive")
    rows = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError:
            raise RRFEncodingError(line_no) from None
        fields = text.split("|")
        if len(fields) != column_count + 1 or fields[-1] != "":
            raise MalformedLine(line_no, column_count, len(fields) - 1)
        rows.append(fields[:-1])
    return rows


def format_rrf_rows(rows: Iterable[Sequence[str]]) -> bytes:
    """Inverse of :func:`parse_rrf_lines`."""
    return "".join("|".join(row) + "|\n" for row in rows).encode("utf-8")


def read_rrf(path, column_count: int) -> list[list[str]]:
    return parse_rrf_lines(Path(path).read_bytes(), column_count)


def load_semantic_group_table(path=None) -> dict[str, tuple[str, str]]:
    """Map both TUI and semantic type name to ``(semantic_type, semantic_group)``."""
    if path is None:
        text = resources.files("kgembed").joinpath("data/semantic_groups.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = {}
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    for ln in lines[1:]:
        tui, sty, group = ln.split("\t")
        table[tui] = (sty, group)
        table[sty] = (sty, group)
    return table


def load_concepts(
    mrconso_rows: Iterable[Sequence[str]],
    mrsty_rows: Iterable[Sequence[str]],
    allowed_groups=SEMANTIC_GROUPS,
    *,
    group_table: dict[str, tuple[str, str]] | None = None,
    sources: Iterable[str] | None = None,
    report: SkipReport | None = None,
) -> list[tuple[ConceptRecord, SemanticTypeRecord]]:
    """Select one record per CUI whose semantic group is in ``allowed_groups``.

    A CUI's semantic type is the first MRSTY row (file order) whose group is
    allowed. Its name comes from the first English MRCONSO row, or from the
    first row of any language when no English row exists. ``sources``
    optionally restricts MRCONSO rows by SAB. Output follows first appearance
    in MRCONSO.
    """
    allowed = set(allowed_groups)
    unknown = allowed - SEMANTIC_GROUPS
    if unknown:
        raise ValueError(f"unsupported semantic groups: {sorted(unknown)}")
    if group_table is None:
        group_table = load_semantic_group_table()
    if report is None:
        report = SkipReport()
    sources = None if sources is None else set(sources)

    types: dict[str, SemanticTypeRecord] = {}
    for row in mrsty_rows:
        cui = row[STY_CUI]
        if cui in types:
            continue
        hit = group_table.get(row[STY_TUI]) or group_table.get(row[STY_STY])
        if hit is not None and hit[1] in allowed:
            types[cui] = SemanticTypeRecord(cui, hit[0], hit[1])

    first_any: dict[str, ConceptRecord] = {}
    first_eng: dict[str, ConceptRecord] = {}
    order: list[str] = []
    for row in mrconso_rows:
        if sources is not None and row[CONSO_SAB] not in sources:
            continue
        cui = row[CONSO_CUI]
        if not cui:
            continue
        rec = ConceptRecord(cui, row[CONSO_CODE], row[CONSO_STR], row[CONSO_LAT])
        if cui not in first_any:
            first_any[cui] = rec
            order.append(cui)
        if rec.language == "ENG" and cui not in first_eng:
            first_eng[cui] = rec

    out = []
    for cui in order:
        if cui not in types:
            report.dropped_concepts += 1
            continue
        out.append((first_eng.get(cui, first_any[cui]), types[cui]))
    logger.info("retained %d concepts, dropped %d", len(out), report.dropped_concepts)
    return out


def load_relations(
    mrrel_rows: Iterable[Sequence[str]],
    retained_cuis,
    *,
    report: SkipReport | None = None,
) -> list[RelationRecord]:
    """Keep relations whose endpoints are both retained.

    Head is CUI1 and tail is CUI2 exactly as stored in MRREL; the relation type
    is RELA when present, otherwise REL. Self-loops and out-of-vocabulary
    endpoints count as dropped; repeated (head, tail, type) triples count as
    duplicates.
    """
    if report is None:
        report = SkipReport()
    retained = set(retained_cuis)
    seen = set()
    out = []
    for row in mrrel_rows:
        head, tail = row[REL_CUI1], row[REL_CUI2]
        rel = row[REL_RELA] or row[REL_REL]
        if head not in retained or tail not in retained or head == tail:
            report.dropped_relations += 1
            continue
        key = (head, tail, rel)
        if key in seen:
            report.duplicate_relations += 1
            continue
        seen.add(key)
        out.append(RelationRecord.make(head, tail, rel))
    logger.info("retained %d relations, dropped %d, duplicates %d",
                len(out), report.dropped_relations, report.duplicate_relations)
    return out


def ingest_directory(directory, allowed_groups=SEMANTIC_GROUPS, *, sources=None, group_table_path=None):
    """Read MRCONSO/MRSTY/MRREL from ``directory``; return concepts, relations and skips."""
    directory = Path(directory)
    report = SkipReport()
    table = load_semantic_group_table(group_table_path)
    concepts = load_concepts(
        read_rrf(directory / "MRCONSO.RRF", MRCONSO_COLUMNS),
        read_rrf(directory / "MRSTY.RRF", MRSTY_COLUMNS),
        allowed_groups, group_table=table, sources=sources, report=report)
    relations = load_relations(
        read_rrf(directory / "MRREL.RRF", MRREL_COLUMNS),
        {c.cui for c, _ in concepts}, report=report)
    return concepts, relations, report
