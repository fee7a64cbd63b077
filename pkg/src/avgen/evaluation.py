"""Precision/recall/F1 with the unlabeled-attribute discard rule, cross-dataset
matrices and cost tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from avgen.backend import ConfigurationError
from avgen.ingest import ProductRecord
from avgen.pairs import AttrValuePair, normalize_pair
from avgen.strategies import Diagnostics, PredictionSet, StrategyCost, predict

__all__ = [
    "ConsistencyError",
    "CostReport",
    "CrossEvalMatrix",
    "EvalReport",
    "MatchCounts",
    "apply_discard_rule",
    "build_cost_report",
    "count_matches",
    "cross_eval",
    "f1_score",
    "normalize_pair",
    "score",
]


class ConsistencyError(ValueError):
    """Predictions and gold records disagree on ids."""


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    discarded: int = 0

    def __iadd__(self, other: MatchCounts) -> MatchCounts:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.discarded += other.discarded
        return self

    @property
    def precision(self) -> float:
        retained = self.tp + self.fp
        return self.tp / retained if retained else 1.0

    @property
    def recall(self) -> float:
        gold = self.tp + self.fn
        return self.tp / gold if gold else 1.0


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    counts: MatchCounts
    per_category: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    config_fingerprint: str = ""
    averaging: str = "micro"

    def to_dict(self, seed: int | None = None) -> dict:
        pct = lambda x: round(100 * x, 2)  # noqa: E731
        out = {
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
            "counts": asdict(self.counts),
            "per_category": {
                cat: {"precision": pct(p), "recall": pct(r), "f1": pct(f)}
                for cat, (p, r, f) in sorted(self.per_category.items())
            },
            "fingerprint": self.config_fingerprint,
            "averaging": self.averaging,
        }
        if seed is not None:
            out["seed"] = seed
        return out


def apply_discard_rule(pred: PredictionSet, gold: Iterable[AttrValuePair]) -> PredictionSet:
    """Drop predicted pairs whose attribute is absent from this record's gold labels."""
    gold_attrs = {normalize_pair(p).attribute for p in gold}
    kept = [p for p in pred.pairs if normalize_pair(p).attribute in gold_attrs]
    diag = replace(pred.diagnostics, discarded=pred.diagnostics.discarded + len(pred.pairs) - len(kept))
    return PredictionSet(pred.record_id, kept, diag, pred.strategy)


def count_matches(pred: PredictionSet, gold: Sequence[AttrValuePair], discard: bool = True) -> MatchCounts:
    retained = apply_discard_rule(pred, gold) if discard else pred
    pred_set = {normalize_pair(p) for p in retained.pairs}
    gold_set = {normalize_pair(p) for p in gold}
    tp = len(pred_set & gold_set)
    discarded = len({normalize_pair(p) for p in pred.pairs}) - len(pred_set)
    return MatchCounts(tp=tp, fp=len(pred_set) - tp, fn=len(gold_set) - tp, discarded=discarded)


def _align(predictions: Sequence[PredictionSet], golds: Sequence[ProductRecord]) -> list[tuple[PredictionSet, ProductRecord]]:
    by_id = {g.id: g for g in golds}
    preds: dict[str, PredictionSet] = {}
    for p in predictions:
        if p.record_id not in by_id:
            raise ConsistencyError(f"prediction for unknown record id {p.record_id!r}")
        if p.record_id in preds:
            raise ConsistencyError(f"duplicate prediction for record id {p.record_id!r}")
        preds[p.record_id] = p
    # Gold records without a prediction count as empty predictions.
    return [(preds.get(g.id) or PredictionSet(g.id), g) for g in golds]


def _prf(counts: MatchCounts) -> tuple[float, float, float]:
    p, r = counts.precision, counts.recall
    return p, r, f1_score(p, r)


def score(
    predictions: Sequence[PredictionSet],
    golds: Sequence[ProductRecord],
    *,
    discard: bool = True,
    macro: bool = False,
    fingerprint: str = "",
) -> EvalReport:
    """Micro-averaged P/R/F1 over all pairs.

    With ``macro=True`` precision and recall are averaged over products
    instead; counts are still the micro totals.
    """
    total = MatchCounts()
    by_cat: dict[str, MatchCounts] = defaultdict(MatchCounts)
    per_record = []
    for pred, gold in _align(predictions, golds):
        counts = count_matches(pred, gold.pairs, discard)
        total += counts
        by_cat[gold.category] += counts
        per_record.append(counts)
    if macro and per_record:
        p = sum(c.precision for c in per_record) / len(per_record)
        r = sum(c.recall for c in per_record) / len(per_record)
    else:
        p, r = total.precision, total.recall
    return EvalReport(
        precision=p,
        recall=r,
        f1=f1_score(p, r),
        counts=total,
        per_category={cat: _prf(c) for cat, c in by_cat.items()},
        config_fingerprint=fingerprint,
        averaging="macro" if macro else "micro",
    )


def fingerprint_of(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


@dataclass
class CrossEvalMatrix:
    names: list[str]
    cells: list[list[float]]

    def cell(self, train: str, test: str) -> float:
        return self.cells[self.names.index(train)][self.names.index(test)]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
        writer.writerow(["train\\test", *self.names])
        for name, row in zip(self.names, self.cells):
            writer.writerow([name, *(f"{v:.2f}" for v in row)])
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> CrossEvalMatrix:
        rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
        names = rows[0][1:]
        return cls(names, [[float(v) for v in row[1:]] for row in rows[1:]])


def cross_eval(models: Mapping[str, object], test_splits: Mapping[str, Sequence[ProductRecord]]) -> CrossEvalMatrix:
    """F1 (percent) of the model trained on each row dataset against each column's test split."""
    missing = set(models) ^ set(test_splits)
    if missing:
        raise ConfigurationError(f"datasets lacking a model or a test split: {sorted(missing)}")
    names = list(models)
    cells = []
    for train_name in names:
        row = []
        for test_name in names:
            records = list(test_splits[test_name])
            report = score(predict(models[train_name], records), records)
            row.append(100.0 * report.f1)
        cells.append(row)
    return CrossEvalMatrix(names, cells)


METRICS = ("train_cost", "infer_cost", "memory", "generated_pairs")
REFERENCE = "end2end"


@dataclass
class CostReport:
    raw: dict[str, dict[str, float]]
    normalized: dict[str, dict[str, float | None]]
    flags: list[str] = field(default_factory=list)

    def to_tsv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
        writer.writerow(["strategy", *METRICS, *(f"{m}_x" for m in METRICS)])
        for name in self.raw:
            norm = self.normalized[name]
            writer.writerow(
                [name, *(f"{self.raw[name][m]:.6g}" for m in METRICS),
                 *("" if norm[m] is None else f"{norm[m]:.2f}" for m in METRICS)]
            )
        return buf.getvalue()


def _as_metrics(cost) -> dict[str, float]:
    if isinstance(cost, StrategyCost):
        return {
            "train_cost": cost.train_seconds,
            "infer_cost": cost.infer_seconds_per_1k,
            "memory": float(cost.memory),
            "generated_pairs": cost.generated_pairs,
        }
    return {m: float(cost[m]) for m in METRICS}


def build_cost_report(probes: Mapping[str, object]) -> CostReport:
    """Divide every metric by the end2end row; zero references leave that metric unnormalized."""
    if REFERENCE not in probes:
        raise ConfigurationError("cost probes must include an end2end row")
    raw = {name: _as_metrics(cost) for name, cost in probes.items()}
    ref = raw[REFERENCE]
    flags = [f"{m}: zero end2end reference, reported raw only" for m in METRICS if ref[m] == 0]
    normalized = {
        name: {m: (None if ref[m] == 0 else row[m] / ref[m]) for m in METRICS} for name, row in raw.items()
    }
    return CostReport(raw, normalized, flags)


def summarize_diagnostics(predictions: Iterable[PredictionSet]) -> dict:
    total = Diagnostics()
    for p in predictions:
        total = total + p.diagnostics
    return total.to_dict()
