"""The (attribute, value) atom shared by ingestion, serialization and scoring."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

SEPARATOR = " | "
HIGHLIGHT = "<hl>"

# Order matters only for readability; sanitize() loops to a fixpoint.
_RESERVED = re.compile(r"\||<hl>|attribute\s*:|value\s*:", re.IGNORECASE)
_WS = re.compile(r"\s+")
_TRAILING = string.punctuation + string.whitespace


@dataclass(frozen=True, order=True)
class AttrValuePair:
    attribute: str
    value: str

    def is_valid(self) -> bool:
        return bool(self.attribute.strip()) and bool(self.value.strip())

    @classmethod
    def clean(cls, attribute: str, value: str) -> AttrValuePair:
        """Build a pair with reserved sequences stripped from both fields."""
        return cls(sanitize(attribute), sanitize(value))

    def to_dict(self) -> dict[str, str]:
        return {"attribute": self.attribute, "value": self.value}


def sanitize(text: str) -> str:
    """Remove reserved separator/template sequences and trim.

    Removal can splice a new reserved sequence together (``"val|ue:"``), so
    the substitution repeats until nothing changes.
    """
    prev = None
    out = text
    while out != prev:
        prev = out
        out = _RESERVED.sub("", out).strip()
    return out


def is_sanitization_stable(text: str) -> bool:
    return sanitize(text) == text


def normalize_pair(pair: AttrValuePair) -> AttrValuePair:
    """Canonical form used for uniqueness and matching.

    Lowercases, collapses whitespace runs, trims, and strips trailing
    punctuation from the value.
    """
    attribute = _WS.sub(" ", pair.attribute.lower()).strip()
    value = _WS.sub(" ", pair.value.lower()).strip().rstrip(_TRAILING)
    return AttrValuePair(attribute, value)


def dedup_normalized(pairs) -> tuple[list[AttrValuePair], int]:
    """Keep the first pair of every normalization class; return (kept, removed)."""
    pairs = list(pairs)
    seen: set[AttrValuePair] = set()
    kept: list[AttrValuePair] = []
    for pair in pairs:
        key = normalize_pair(pair)
        if key in seen:
            continue
        seen.add(key)
        kept.append(pair)
    return kept, len(pairs) - len(kept)
