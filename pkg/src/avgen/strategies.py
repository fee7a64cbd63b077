"""Training and inference for the pipeline, multitask, end2end and ensemble strategies."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

from avgen import backend
from avgen.backend import BackendConfig, ConfigurationError, CostRecord, TrainedModel
from avgen.ingest import ProductRecord
from avgen.pairs import AttrValuePair, dedup_normalized, normalize_pair, sanitize
from avgen.serdes import (
    BuildReport,
    Strategy,
    Task,
    TaskExample,
    add_task_prefix,
    highlight_value,
    make_training_examples,
    parse_pairs,
    parse_values,
    strip_highlight,
)

# Model roles each strategy trains, in training order.
ROLES = {
    Strategy.PIPELINE: ("pipeline-ve", "pipeline-ag"),
    Strategy.MULTITASK: ("multitask",),
    Strategy.END2END: ("end2end",),
}


@dataclass
class Diagnostics:
    malformed: int = 0
    values_not_found: int = 0
    duplicates_removed: int = 0
    discarded: int = 0

    def __add__(self, other: Diagnostics) -> Diagnostics:
        return Diagnostics(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class PredictionSet:
    record_id: str
    pairs: list[AttrValuePair] = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    strategy: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.record_id,
            "strategy": self.strategy,
            "pairs": [p.to_dict() for p in self.pairs],
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> PredictionSet:
        return cls(
            record_id=str(obj["id"]),
            pairs=[AttrValuePair(p["attribute"], p["value"]) for p in obj.get("pairs", [])],
            diagnostics=Diagnostics(**obj.get("diagnostics", {})),
            strategy=obj.get("strategy", ""),
        )


def _finalize(record_id: str, pairs: list[AttrValuePair], diag: Diagnostics, strategy: str) -> PredictionSet:
    kept, removed = dedup_normalized(pairs)
    diag.duplicates_removed += removed
    return PredictionSet(record_id, kept, diag, strategy)


def build_corpus(records: Sequence[ProductRecord], strategy: Strategy | str) -> tuple[dict[str, list[TaskExample]], BuildReport]:
    """Training examples keyed by model role.

    Pipeline splits its examples into a VE corpus and an AG corpus for two
    separate models; multitask and end2end produce one corpus each.
    """
    strategy = Strategy(strategy)
    if not records:
        raise ConfigurationError("no records to build a corpus from")
    report = BuildReport()
    examples: list[TaskExample] = []
    for rec in records:
        examples.extend(make_training_examples(rec, strategy, report))
    if strategy is Strategy.PIPELINE:
        corpora = {
            "pipeline-ve": [e for e in examples if e.task is Task.VE],
            "pipeline-ag": [e for e in examples if e.task is Task.AG],
        }
    else:
        corpora = {ROLES[strategy][0]: examples}
    return corpora, report


class TwoStagePredictor:
    """Value extraction then attribute generation, batched across records.

    ``ve_model`` and ``ag_model`` may be the same model (multitask), in which
    case ``prefixed`` must be set so each stage carries its task prefix.
    """

    def __init__(self, ve_model: TrainedModel, ag_model: TrainedModel, prefixed: bool, name: str):
        self.ve_model = ve_model
        self.ag_model = ag_model
        self.prefixed = prefixed
        self.name = name

    @property
    def models(self) -> dict[str, TrainedModel]:
        if self.prefixed:
            return {"multitask": self.ve_model}
        return {"pipeline-ve": self.ve_model, "pipeline-ag": self.ag_model}

    def predict_texts(self, ids: Sequence[str], texts: Sequence[str]) -> list[PredictionSet]:
        texts = [strip_highlight(t) for t in texts]
        ve_sources = [add_task_prefix(Task.VE, t) if self.prefixed else t for t in texts]
        ve_out = backend.generate(self.ve_model, ve_sources)

        diags = [Diagnostics() for _ in texts]
        jobs: list[tuple[int, str]] = []
        ag_sources: list[str] = []
        for i, (text, generated) in enumerate(zip(texts, ve_out)):
            parsed = parse_values(generated)
            diags[i].malformed += parsed.malformed_segments
            diags[i].duplicates_removed += parsed.duplicates
            for value in parsed.parsed:
                value = sanitize(value)
                marked = highlight_value(text, value) if value else None
                if marked is None:
                    diags[i].values_not_found += 1
                    continue
                jobs.append((i, value))
                ag_sources.append(add_task_prefix(Task.AG, marked) if self.prefixed else marked)

        ag_out = backend.generate(self.ag_model, ag_sources)
        pairs: list[list[AttrValuePair]] = [[] for _ in texts]
        for (i, value), attribute in zip(jobs, ag_out):
            pair = AttrValuePair(sanitize(attribute), value)
            if pair.is_valid():
                pairs[i].append(pair)
            else:
                diags[i].malformed += 1
        return [_finalize(rid, p, d, self.name) for rid, p, d in zip(ids, pairs, diags)]


class End2EndPredictor:
    name = Strategy.END2END.value

    def __init__(self, model: TrainedModel):
        self.model = model

    @property
    def models(self) -> dict[str, TrainedModel]:
        return {"end2end": self.model}

    def predict_texts(self, ids: Sequence[str], texts: Sequence[str]) -> list[PredictionSet]:
        texts = [strip_highlight(t) for t in texts]
        out = []
        for rid, generated in zip(ids, backend.generate(self.model, texts)):
            parsed = parse_pairs(generated)
            diag = Diagnostics(malformed=parsed.malformed_segments, duplicates_removed=parsed.duplicates)
            out.append(_finalize(rid, list(parsed.parsed), diag, self.name))
        return out


class EnsemblePredictor:
    name = "ensemble"

    def __init__(self, members: Sequence):
        if not members:
            raise ConfigurationError("an ensemble needs at least one member")
        if any(isinstance(m, EnsemblePredictor) for m in members):
            raise ConfigurationError("ensembles cannot be nested")
        self.members = list(members)

    @property
    def models(self) -> dict[str, TrainedModel]:
        return {f"{m.name}/{k}": v for m in self.members for k, v in m.models.items()}

    def predict_texts(self, ids: Sequence[str], texts: Sequence[str]) -> list[PredictionSet]:
        per_member = [m.predict_texts(ids, texts) for m in self.members]
        return [ensemble_combine(list(sets)) for sets in zip(*per_member)]


def predict(predictor, records: Iterable[ProductRecord]) -> list[PredictionSet]:
    records = list(records)
    return predictor.predict_texts([r.id for r in records], [r.text for r in records])


def pipeline_predict(ve_model: TrainedModel, ag_model: TrainedModel, text: str, record_id: str = "") -> PredictionSet:
    return TwoStagePredictor(ve_model, ag_model, False, Strategy.PIPELINE.value).predict_texts([record_id], [text])[0]


def multitask_predict(model: TrainedModel, text: str, record_id: str = "") -> PredictionSet:
    return TwoStagePredictor(model, model, True, Strategy.MULTITASK.value).predict_texts([record_id], [text])[0]


def e2e_predict(model: TrainedModel, text: str, record_id: str = "") -> PredictionSet:
    return End2EndPredictor(model).predict_texts([record_id], [text])[0]


def ensemble_combine(sets: Sequence[PredictionSet]) -> PredictionSet:
    """Union of member pairs under normalization; diagnostics are summed."""
    if not sets:
        raise ValueError("nothing to combine")
    ids = {s.record_id for s in sets}
    if len(ids) != 1:
        raise ValueError(f"cannot combine predictions for different records: {sorted(ids)}")
    diag = Diagnostics()
    seen: set[AttrValuePair] = set()
    pairs = []
    for s in sets:
        diag = diag + s.diagnostics
        for p in s.pairs:
            key = normalize_pair(p)
            if key not in seen:
                seen.add(key)
                pairs.append(p)
    return PredictionSet(sets[0].record_id, pairs, diag, EnsemblePredictor.name)


def make_predictor(strategy: Strategy | str, models: dict[str, TrainedModel]):
    strategy = Strategy(strategy)
    if strategy is Strategy.PIPELINE:
        return TwoStagePredictor(models["pipeline-ve"], models["pipeline-ag"], False, strategy.value)
    if strategy is Strategy.MULTITASK:
        return TwoStagePredictor(models["multitask"], models["multitask"], True, strategy.value)
    return End2EndPredictor(models["end2end"])


def train_strategy(
    strategy: Strategy | str,
    train_records: Sequence[ProductRecord],
    val_records: Sequence[ProductRecord] = (),
    config_for: Callable[[str], BackendConfig] | None = None,
):
    """Build corpora, train every model the strategy needs, return a predictor.

    ``config_for`` maps a role name to its BackendConfig; the default is the
    mock backend with table defaults.
    """
    strategy = Strategy(strategy)
    config_for = config_for or (lambda role: backend.default_config(backend.MOCK, role))
    corpora, _ = build_corpus(train_records, strategy)
    val_corpora = build_corpus(val_records, strategy)[0] if val_records else {}
    models = {}
    for role in ROLES[strategy]:
        models[role] = backend.train(corpora[role], config_for(role), val_corpora.get(role, []))
    return make_predictor(strategy, models)


def save_predictor(predictor, root) -> dict[str, str]:
    root = Path(root)
    paths = {role: str(backend.save_model(m, root / role).relative_to(root)) for role, m in predictor.models.items()}
    (root / "strategy.json").write_text(json.dumps({"strategy": predictor.name, "models": paths}, indent=2) + "\n")
    return paths


def load_predictor(root):
    root = Path(root)
    meta = json.loads((root / "strategy.json").read_text())
    models = {role: backend.load_model(root / rel) for role, rel in meta["models"].items()}
    return make_predictor(meta["strategy"], models)


def write_predictions(predictions: Iterable[PredictionSet], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")


def read_predictions(path) -> list[PredictionSet]:
    with open(path, encoding="utf-8") as fh:
        return [PredictionSet.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass(frozen=True)
class StrategyCost:
    train_seconds: float
    infer_seconds_per_1k: float
    memory: int
    generated_pairs: float


def probe_strategy(predictor, records: Sequence[ProductRecord], repeats: int = 3) -> StrategyCost:
    """Training time (summed over models), best-of-n inference time, parameter total, mean pair count."""
    records = list(records)
    models = predictor.models
    train_seconds = sum(m.report.train_seconds for m in models.values())
    memory = sum(m.parameter_count for m in models.values())
    best = float("inf")
    predictions: list[PredictionSet] = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        predictions = predict(predictor, records)
        best = min(best, time.perf_counter() - start)
    per_1k = best * 1000.0 / len(records) if records else 0.0
    mean_pairs = sum(len(p.pairs) for p in predictions) / len(records) if records else 0.0
    return StrategyCost(train_seconds, per_1k, memory, mean_pairs)


__all__ = [
    "CostRecord",
    "Diagnostics",
    "End2EndPredictor",
    "EnsemblePredictor",
    "PredictionSet",
    "TwoStagePredictor",
    "build_corpus",
    "e2e_predict",
    "ensemble_combine",
    "load_predictor",
    "make_predictor",
    "multitask_predict",
    "pipeline_predict",
    "predict",
    "probe_strategy",
    "read_predictions",
    "save_predictor",
    "train_strategy",
    "write_predictions",
]
