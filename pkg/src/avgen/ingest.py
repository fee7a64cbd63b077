"""Corpus loaders, stratified splitting and corpus statistics.

Every source format is adapted into one canonical line-delimited record
schema::

    {"id": ..., "category": ..., "text": ..., "pairs": [{"attribute": ..., "value": ...}]}
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from avgen.pairs import AttrValuePair, dedup_normalized, normalize_pair

logger = logging.getLogger(__name__)

DEFAULT_CATEGORY = "default"
FORMATS = ("ae110k", "oamine", "mave", "canonical")


class IngestError(Exception):
    """Fatal input problem (unreadable file, bad arguments)."""


@dataclass(frozen=True)
class ProductRecord:
    id: str
    category: str
    text: str
    pairs: tuple[AttrValuePair, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "text": self.text,
            "pairs": [p.to_dict() for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> ProductRecord:
        return cls(
            id=str(obj["id"]),
            category=str(obj.get("category") or DEFAULT_CATEGORY),
            text=str(obj["text"]),
            pairs=tuple(AttrValuePair(str(p["attribute"]), str(p["value"])) for p in obj.get("pairs", [])),
        )


@dataclass
class LoadReport:
    """What a loader skipped and why."""

    rows_read: int = 0
    malformed: list[str] = field(default_factory=list)
    null_values_dropped: int = 0
    negatives_dropped: int = 0
    empty_records_dropped: int = 0
    duplicate_ids: list[str] = field(default_factory=list)
    duplicate_pairs_dropped: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "malformed": len(self.malformed),
            "malformed_examples": self.malformed[:20],
            "null_values_dropped": self.null_values_dropped,
            "negatives_dropped": self.negatives_dropped,
            "empty_records_dropped": self.empty_records_dropped,
            "duplicate_ids": self.duplicate_ids,
            "duplicate_pairs_dropped": self.duplicate_pairs_dropped,
        }


@dataclass
class DatasetSplit:
    train: list[ProductRecord]
    val: list[ProductRecord]
    test: list[ProductRecord]
    seed: int
    ratios: tuple[float, float, float]
    report: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetStats:
    n_products: int = 0
    n_pairs: int = 0
    n_categories: int = 0
    n_unique_attributes: int = 0
    n_unique_values: int = 0


def _open_text(path) -> Iterator[str]:
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        yield from fh


def _make_record(rid, category, text, pairs, report: LoadReport) -> ProductRecord | None:
    text = (text or "").strip()
    valid = [AttrValuePair(p.attribute.strip(), p.value.strip()) for p in pairs]
    valid = [p for p in valid if p.is_valid()]
    kept, removed = dedup_normalized(valid)
    report.duplicate_pairs_dropped += removed
    if not text or not kept:
        report.empty_records_dropped += 1
        return None
    return ProductRecord(str(rid), category or DEFAULT_CATEGORY, text, tuple(kept))


def _is_null(value: str) -> bool:
    v = value.strip()
    return not v or v.upper() == "NULL"


def title_id(title: str) -> str:
    return hashlib.sha1(title.encode("utf-8")).hexdigest()[:16]


def load_ae110k(path, report: LoadReport | None = None) -> Iterator[ProductRecord]:
    """Tab-separated ``title, attribute, value[, category]`` triples.

    Triples with a NULL (or empty) value are dropped, then the rest are
    merged by identical title in first-appearance order.
    """
    report = report if report is not None else LoadReport()
    merged: dict[str, list] = {}
    reader = csv.reader(_open_text(path), delimiter="\t", quoting=csv.QUOTE_NONE)
    for lineno, row in enumerate(reader, 1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        report.rows_read += 1
        if len(row) not in (3, 4):
            report.malformed.append(f"line {lineno}: {len(row)} columns")
            continue
        title, attribute, value = (c.strip() for c in row[:3])
        category = row[3].strip() if len(row) == 4 else ""
        if _is_null(value):
            report.null_values_dropped += 1
            continue
        if not title:
            report.malformed.append(f"line {lineno}: empty title")
            continue
        entry = merged.setdefault(title, [category, []])
        if not entry[0] and category:
            entry[0] = category
        entry[1].append(AttrValuePair(attribute, value))
    for title, (category, pairs) in merged.items():
        rec = _make_record(title_id(title), category, title, pairs, report)
        if rec is not None:
            yield rec


def _json_lines(path, report: LoadReport) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(_open_text(path), 1):
        if not line.strip():
            continue
        report.rows_read += 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.malformed.append(f"line {lineno}: {exc.msg}")
            continue
        if not isinstance(obj, dict):
            report.malformed.append(f"line {lineno}: not an object")
            continue
        yield lineno, obj


class _IdFilter:
    def __init__(self, report: LoadReport):
        self.seen: set[str] = set()
        self.report = report

    def __call__(self, rec: ProductRecord | None) -> bool:
        if rec is None:
            return False
        if rec.id in self.seen:
            self.report.duplicate_ids.append(rec.id)
            return False
        self.seen.add(rec.id)
        return True


def _oamine_pairs(obj: dict) -> list[AttrValuePair]:
    if "pairs" in obj:
        return [AttrValuePair(str(p["attribute"]), str(p["value"])) for p in obj["pairs"]]
    if "entities" in obj:
        return [AttrValuePair(str(e["label"]), str(e["value"])) for e in obj["entities"]]
    attrs = obj.get("attributes")
    if isinstance(attrs, dict):
        out = []
        for key, values in attrs.items():
            for v in values if isinstance(values, list) else [values]:
                out.append(AttrValuePair(str(key), str(v)))
        return out
    raise KeyError("pairs")


def load_oamine(path, report: LoadReport | None = None) -> Iterator[ProductRecord]:
    """Human-annotated OA-Mine records; only field names are mapped.

    Accepted field spellings: ``id``/``asin``; ``text``/``title``;
    ``pairs`` (attribute/value), ``entities`` (label/value) or an
    ``attributes`` mapping.
    """
    report = report if report is not None else LoadReport()
    keep = _IdFilter(report)
    for lineno, obj in _json_lines(path, report):
        try:
            rid = obj.get("id", obj.get("asin", f"line-{lineno}"))
            text = obj.get("text", obj.get("title"))
            pairs = _oamine_pairs(obj)
        except (KeyError, TypeError) as exc:
            report.malformed.append(f"line {lineno}: missing {exc}")
            continue
        if not isinstance(text, str):
            report.malformed.append(f"line {lineno}: no text")
            continue
        rec = _make_record(rid, str(obj.get("category") or ""), text, pairs, report)
        if keep(rec):
            yield rec


def load_canonical(path, report: LoadReport | None = None) -> Iterator[ProductRecord]:
    report = report if report is not None else LoadReport()
    keep = _IdFilter(report)
    for lineno, obj in _json_lines(path, report):
        try:
            raw = ProductRecord.from_dict(obj)
        except (KeyError, TypeError) as exc:
            report.malformed.append(f"line {lineno}: missing {exc}")
            continue
        rec = _make_record(raw.id, raw.category, raw.text, raw.pairs, report)
        if keep(rec):
            yield rec


def load_mave(path, report: LoadReport | None = None) -> Iterator[ProductRecord]:
    """MAVE records with negative attribute entries removed.

    The value of an attribute entry is the text of its first evidence span.
    Text is the concatenation of all paragraphs.
    """
    report = report if report is not None else LoadReport()
    keep = _IdFilter(report)
    for lineno, obj in _json_lines(path, report):
        try:
            rid = obj["id"]
            paragraphs = obj["paragraphs"]
            text = " ".join(str(p["text"]).strip() for p in paragraphs)
            pairs = []
            for entry in obj["attributes"]:
                spans = entry.get("evidences") or []
                if not spans:
                    report.negatives_dropped += 1
                    continue
                pairs.append(AttrValuePair(str(entry["key"]), str(spans[0]["value"])))
        except (KeyError, TypeError) as exc:
            report.malformed.append(f"line {lineno}: missing {exc}")
            continue
        rec = _make_record(rid, str(obj.get("category") or ""), text, pairs, report)
        if keep(rec):
            yield rec


LOADERS = {
    "ae110k": load_ae110k,
    "oamine": load_oamine,
    "mave": load_mave,
    "canonical": load_canonical,
}


def load(path, fmt: str, report: LoadReport | None = None) -> Iterator[ProductRecord]:
    try:
        loader = LOADERS[fmt]
    except KeyError:
        raise IngestError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}") from None
    return loader(path, report)


def write_records(records: Iterable[ProductRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_records(path) -> list[ProductRecord]:
    return list(load_canonical(path))


def _largest_remainder(n: int, ratios: Sequence[Fraction]) -> list[int]:
    quotas = [n * r for r in ratios]
    counts = [int(q) for q in quotas]  # floor; quotas are non-negative
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def parse_ratios(ratios) -> tuple[Fraction, Fraction, Fraction]:
    """Accept ``"8:1:1"`` or three fractions summing to 1.

    Integer parts (``8:1:1``) are normalized; fractional parts
    (``0.8:0.1:0.1``) must already sum to 1.
    """
    if isinstance(ratios, str):
        try:
            parts = [Fraction(p.strip()) for p in ratios.split(":")]
        except ValueError:
            raise ValueError(f"bad ratios {ratios!r}") from None
        if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) == 0:
            raise ValueError(f"bad ratios {ratios!r}")
        if all(p.denominator == 1 for p in parts) and sum(parts) != 1:
            total = sum(parts)
            return tuple(p / total for p in parts)  # type: ignore[return-value]
        ratios = parts
    fr = [Fraction(r).limit_denominator(10**9) for r in ratios]
    if len(fr) != 3 or any(r < 0 for r in fr) or sum(fr) != 1:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios!r}")
    return tuple(fr)  # type: ignore[return-value]


def stratified_split(records: Sequence[ProductRecord], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Per-category seeded shuffle, then largest-remainder partition.

    Categories with fewer than three records go entirely to train and are
    listed under ``small_categories`` in the report.
    """
    fr = parse_ratios(ratios)
    position = {}
    by_cat: dict[str, list[ProductRecord]] = defaultdict(list)
    for i, rec in enumerate(records):
        if rec.id in position:
            raise ValueError(f"duplicate record id {rec.id!r}")
        position[rec.id] = i
        by_cat[rec.category].append(rec)

    buckets: list[list[ProductRecord]] = [[], [], []]
    per_category = {}
    small = []
    for cat in sorted(by_cat):
        members = list(by_cat[cat])
        random.Random(f"{seed}:{cat}").shuffle(members)
        if len(members) < 3:
            counts = [len(members), 0, 0]
            small.append(cat)
        else:
            counts = _largest_remainder(len(members), fr)
        start = 0
        for b, c in zip(buckets, counts):
            b.extend(members[start:start + c])
            start += c
        per_category[cat] = dict(zip(("train", "val", "test"), counts))

    for b in buckets:
        b.sort(key=lambda r: position[r.id])
    float_ratios = tuple(float(r) for r in fr)
    report = {
        "seed": seed,
        "ratios": list(float_ratios),
        "counts": {name: len(b) for name, b in zip(("train", "val", "test"), buckets)},
        "per_category": per_category,
        "small_categories": small,
    }
    return DatasetSplit(buckets[0], buckets[1], buckets[2], seed, float_ratios, report)  # type: ignore[arg-type]


def compute_stats(records: Iterable[ProductRecord]) -> DatasetStats:
    n_products = n_pairs = 0
    categories, attributes, values = set(), set(), set()
    for rec in records:
        n_products += 1
        categories.add(rec.category)
        for pair in rec.pairs:
            n_pairs += 1
            norm = normalize_pair(pair)
            attributes.add(norm.attribute)
            values.add(norm.value)
    return DatasetStats(n_products, n_pairs, len(categories), len(attributes), len(values))
