"""Per-(checkpoint, approach) training defaults used for the reported runs."""

from __future__ import annotations

ROLES = ("pipeline-ve", "pipeline-ag", "multitask", "end2end")

# (epochs, learning rate, batch size)
HYPERPARAMETERS: dict[tuple[str, str], tuple[int, float, int]] = {
    ("t5-small", "pipeline-ve"): (9, 5e-5, 128),
    ("t5-small", "pipeline-ag"): (11, 5e-5, 128),
    ("t5-small", "multitask"): (16, 5e-4, 256),
    ("t5-small", "end2end"): (18, 5e-4, 256),
    ("t5-base", "pipeline-ve"): (8, 5e-4, 64),
    ("t5-base", "pipeline-ag"): (7, 5e-4, 64),
    ("t5-base", "multitask"): (8, 5e-4, 128),
    ("t5-base", "end2end"): (11, 5e-4, 64),
    ("t5-large", "pipeline-ve"): (6, 5e-5, 128),
    ("t5-large", "pipeline-ag"): (5, 5e-4, 64),
    ("t5-large", "multitask"): (5, 1e-4, 64),
    ("t5-large", "end2end"): (8, 1e-4, 64),
    ("facebook/bart-base", "pipeline-ve"): (5, 5e-5, 64),
    ("facebook/bart-base", "pipeline-ag"): (4, 1e-4, 128),
    ("facebook/bart-base", "multitask"): (4, 1e-4, 64),
    ("facebook/bart-base", "end2end"): (6, 5e-4, 128),
    ("facebook/bart-large", "pipeline-ve"): (6, 5e-5, 64),
    ("facebook/bart-large", "pipeline-ag"): (4, 5e-5, 128),
    ("facebook/bart-large", "multitask"): (3, 1e-5, 64),
    ("facebook/bart-large", "end2end"): (7, 1e-5, 64),
}

_ALIASES = {
    "google-t5/t5-small": "t5-small",
    "google-t5/t5-base": "t5-base",
    "google-t5/t5-large": "t5-large",
    "bart-base": "facebook/bart-base",
    "bart-large": "facebook/bart-large",
}

# Anything not in the table (the mock, local checkpoints).
FALLBACK = (3, 1e-4, 64)

MAX_INPUT_TOKENS = 512
MAX_OUTPUT_TOKENS_E2E = 256
MAX_OUTPUT_TOKENS = 64
EARLY_STOP_PATIENCE = 3


def canonical_model_id(model_id: str) -> str:
    return _ALIASES.get(model_id, model_id)


def lookup(model_id: str, role: str) -> tuple[int, float, int]:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}; expected one of {ROLES}")
    return HYPERPARAMETERS.get((canonical_model_id(model_id), role), FALLBACK)
