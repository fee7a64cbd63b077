"""Synthetic corpora and reference records shared by the test modules."""

from __future__ import annotations

import random

from avgen.ingest import ProductRecord
from avgen.pairs import AttrValuePair

FIG1_TEXT = "Fossil Men's Watch Analog Display Slim Case Design with Brown Leather Band"
FIG1_PAIRS = (
    AttrValuePair("Brand", "Fossil"),
    AttrValuePair("Band Color", "Brown"),
    AttrValuePair("Band Material", "Leather"),
)


def figure1_record(rid: str = "fig1", category: str = "watches") -> ProductRecord:
    return ProductRecord(rid, category, FIG1_TEXT, FIG1_PAIRS)


ATTRIBUTES = ["Brand", "Color", "Material", "Size", "Style", "Gender", "Flavor", "Pattern", "Type", "Season"]
FILLER = ["premium", "new", "classic", "outdoor", "for", "with", "and", "sport", "casual", "set", "pack", "deluxe"]


def _word(rng: random.Random, n: int = 6) -> str:
    return "".join(rng.choice("bcdfghjklmnprstvz") + rng.choice("aeiou") for _ in range(n // 2)).capitalize()


def synthetic_corpus(n: int, n_categories: int = 4, seed: int = 0, prefix: str = "p",
                     max_pairs: int = 4) -> list[ProductRecord]:
    """Records whose gold values all occur verbatim in their (unique) text.

    Values within a record are distinct case-insensitively, so every
    highlighted source is unique.
    """
    rng = random.Random(seed)
    records = []
    for i in range(n):
        k = rng.randint(1, max_pairs)
        attrs = rng.sample(ATTRIBUTES, k)
        values: list[str] = []
        while len(values) < k:
            v = _word(rng, rng.choice([4, 6, 8]))
            if rng.random() < 0.3:
                v += " " + _word(rng, 4)
            if v.lower() not in {x.lower() for x in values}:
                values.append(v)
        words = [f"{prefix}{i:05d}"] + values + rng.sample(FILLER, 3)
        rng.shuffle(words)
        records.append(
            ProductRecord(
                id=f"{prefix}-{i}",
                category=f"cat{i % n_categories}",
                text=" ".join(words),
                pairs=tuple(AttrValuePair(a, v) for a, v in zip(attrs, values)),
            )
        )
    return records


def random_pairs(rng: random.Random, n: int, attrs=("brand", "color", "size", "material"),
                 values=("red", "blue", "Red.", "fossil", "xl", " Fossil ")) -> list[AttrValuePair]:
    return [AttrValuePair(rng.choice(attrs), rng.choice(values)) for _ in range(n)]
