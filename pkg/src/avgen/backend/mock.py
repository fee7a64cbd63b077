"""Lookup-table backend: returns the memorized target for a seen source, "" otherwise.

When two training examples share a source, the first one wins.
"""

from __future__ import annotations

import json
from pathlib import Path

from avgen.backend import (
    EarlyStopping,
    TrainedModel,
    TrainingReport,
    fingerprint,
    truncate_tokens,
)

# Nominal size reported for every mock model so memory ratios track model count.
PARAMETER_COUNT = 1_000_000


def _val_loss(table: dict[str, str], val, limit: int) -> float:
    if not val:
        return 0.0
    misses = sum(table.get(truncate_tokens(ex.source, limit)[0]) != ex.target for ex in val)
    return misses / len(val)


def train(examples, config, val_examples) -> TrainedModel:
    report = TrainingReport(n_examples=len(examples), n_val_examples=len(val_examples))
    sources = []
    for ex in examples:
        source, cut = truncate_tokens(ex.source, config.max_input_tokens)
        report.truncated_sources += cut
        sources.append(source)

    # The whole table is learned in the first epoch; later epochs only
    # re-measure validation loss, so early stopping fires after `patience`.
    table: dict[str, str] = {}
    stopper = EarlyStopping(config.early_stop_patience)
    for epoch in range(config.epochs):
        if epoch == 0:
            for source, ex in zip(sources, examples):
                table.setdefault(source, ex.target)
        report.epochs_completed = epoch + 1
        loss = _val_loss(table, val_examples, config.max_input_tokens)
        report.val_losses.append(loss)
        if stopper.step(loss):
            report.stopped_early = report.epochs_completed < config.epochs
            break

    return TrainedModel(table, config, fingerprint(examples, config), report, PARAMETER_COUNT)


def generate(model: TrainedModel, sources: list[str]) -> list[str]:
    cfg = model.config
    out = []
    for source in sources:
        key, _ = truncate_tokens(source, cfg.max_input_tokens)
        target = model.handle.get(key, "")
        out.append(truncate_tokens(target, cfg.max_output_tokens)[0])
    return out


def save(model: TrainedModel, path: Path) -> None:
    with open(path / "memory.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for source, target in model.handle.items():
            fh.write(json.dumps({"source": source, "target": target}, ensure_ascii=False) + "\n")


def load(path: Path, config) -> dict[str, str]:
    table = {}
    with open(path / "memory.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                table[obj["source"]] = obj["target"]
    return table
