"""Sequence-to-sequence backends: a memorizing mock and a transformers adapter.

Backends are selected by ``BackendConfig.model_id``: ``"mock"`` gives the
deterministic lookup-table model, anything else is handed to the
transformers adapter as a hub name or local checkpoint directory.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from avgen.backend import hparams
from avgen.pairs import HIGHLIGHT
from avgen.serdes import TaskExample

MOCK = "mock"
OPTIMIZER = {"name": "adam", "betas": [0.9, 0.999], "eps": 1e-8, "schedule": "constant"}


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    model_id: str = MOCK
    max_input_tokens: int = hparams.MAX_INPUT_TOKENS
    max_output_tokens: int = hparams.MAX_OUTPUT_TOKENS
    epochs: int = hparams.FALLBACK[0]
    learning_rate: float = hparams.FALLBACK[1]
    batch_size: int = hparams.FALLBACK[2]
    early_stop_patience: int = hparams.EARLY_STOP_PATIENCE
    decode_mode: str = "greedy"
    beam_width: int = 1
    seed: int = 0
    special_tokens: tuple[str, ...] = (HIGHLIGHT,)

    def __post_init__(self):
        counts = ("max_input_tokens", "max_output_tokens", "epochs", "batch_size", "early_stop_patience")
        for name in counts:
            if int(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.decode_mode not in ("greedy", "beam"):
            raise ConfigurationError(f"decode_mode must be greedy or beam, got {self.decode_mode!r}")
        if self.beam_width < 1:
            raise ConfigurationError("beam width must be >= 1")

    @property
    def num_beams(self) -> int:
        return self.beam_width if self.decode_mode == "beam" else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["special_tokens"] = list(self.special_tokens)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BackendConfig:
        d = dict(d)
        d["special_tokens"] = tuple(d.get("special_tokens", (HIGHLIGHT,)))
        return cls(**d)


def default_config(model_id: str, role: str, **overrides) -> BackendConfig:
    """Hyperparameter defaults for a checkpoint and approach role, then overrides."""
    epochs, lr, batch = hparams.lookup(model_id, role)
    max_out = hparams.MAX_OUTPUT_TOKENS_E2E if role == "end2end" else hparams.MAX_OUTPUT_TOKENS
    cfg = BackendConfig(
        model_id=model_id, epochs=epochs, learning_rate=lr, batch_size=batch, max_output_tokens=max_out
    )
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class TrainingReport:
    n_examples: int = 0
    n_val_examples: int = 0
    truncated_sources: int = 0
    epochs_completed: int = 0
    stopped_early: bool = False
    val_losses: list[float] = field(default_factory=list)
    train_seconds: float = 0.0


@dataclass
class TrainedModel:
    handle: Any
    config: BackendConfig
    training_fingerprint: str
    report: TrainingReport = field(default_factory=TrainingReport)
    parameter_count: int = 0


def fingerprint(examples: Sequence[TaskExample], config: BackendConfig) -> str:
    h = hashlib.sha256()
    payload = {"config": config.to_dict(), "optimizer": OPTIMIZER}
    h.update(json.dumps(payload, sort_keys=True).encode())
    for ex in examples:
        h.update(json.dumps([ex.source, ex.target, ex.task.value]).encode())
        h.update(b"\n")
    return h.hexdigest()


class EarlyStopping:
    """Stop once validation loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.bad_epochs = 0

    def step(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _backend(model_id: str):
    if model_id == MOCK:
        from avgen.backend import mock

        return mock
    from avgen.backend import hf

    return hf


def train(
    examples: Sequence[TaskExample], config: BackendConfig, val_examples: Sequence[TaskExample] = ()
) -> TrainedModel:
    if not examples:
        raise ConfigurationError("cannot train on an empty corpus")
    uses_hl = any(HIGHLIGHT in ex.source for ex in examples)
    if uses_hl and HIGHLIGHT not in config.special_tokens:
        raise ConfigurationError(f"{HIGHLIGHT} must be registered as a special token")
    start = time.perf_counter()
    model = _backend(config.model_id).train(list(examples), config, list(val_examples))
    model.report.train_seconds = time.perf_counter() - start
    return model


def generate(model: TrainedModel, sources: Sequence[str]) -> list[str]:
    if not sources:
        return []
    outputs = _backend(model.config.model_id).generate(model, list(sources))
    assert len(outputs) == len(sources)
    return outputs


@dataclass(frozen=True)
class CostRecord:
    train_seconds: float
    infer_seconds_per_1k: float
    parameter_count: int
    fingerprint: str = ""


def time_generation(model: TrainedModel, sources: Sequence[str], repeats: int = 3) -> float:
    """Best-of-``repeats`` wall clock for one batched generate call, in seconds."""
    best = float("inf")
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        generate(model, sources)
        best = min(best, time.perf_counter() - start)
    return best


def cost_probe(model: TrainedModel, examples: Sequence[TaskExample], repeats: int = 3) -> CostRecord:
    sources = [ex.source for ex in examples]
    seconds = time_generation(model, sources, repeats) if sources else 0.0
    per_1k = seconds * 1000.0 / len(sources) if sources else 0.0
    return CostRecord(model.report.train_seconds, per_1k, model.parameter_count, model.training_fingerprint)


def save_model(model: TrainedModel, root) -> Path:
    """Write ``root/<fingerprint>/manifest.json`` plus backend weights."""
    out = Path(root) / model.training_fingerprint[:16]
    out.mkdir(parents=True, exist_ok=True)
    _backend(model.config.model_id).save(model, out)
    manifest = {
        "config": model.config.to_dict(),
        "fingerprint": model.training_fingerprint,
        "optimizer": OPTIMIZER,
        "parameter_count": model.parameter_count,
        "training_report": asdict(model.report),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_model(path) -> TrainedModel:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    config = BackendConfig.from_dict(manifest["config"])
    report = TrainingReport(**manifest["training_report"])
    model = TrainedModel(None, config, manifest["fingerprint"], report, manifest.get("parameter_count", 0))
    model.handle = _backend(config.model_id).load(path, config)
    return model


def count_tokens(text: str) -> int:
    """Whitespace token count; the mock's length measure."""
    return len(text.split())


def truncate_tokens(text: str, limit: int) -> tuple[str, bool]:
    tokens = text.split()
    if len(tokens) <= limit:
        return text, False
    return " ".join(tokens[:limit]), True
