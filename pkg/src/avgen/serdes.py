"""Text encodings between structured records and seq2seq source/target strings.

Value lists flatten to ``"v1 | v2 | v3"``; pair lists flatten to
``"attribute: a1, value: v1 | attribute: a2, value: v2"``. Reserved
sequences (``|``, ``<hl>``, ``attribute:``, ``value:``) are stripped from
fields before rendering, so no escaping grammar is needed.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Sequence

from avgen.ingest import ProductRecord
from avgen.pairs import HIGHLIGHT, SEPARATOR, AttrValuePair, sanitize

VE_PREFIX = "extract value: "
AG_PREFIX = "generate attribute: "

_TEMPLATE = re.compile(
    r"^attribute\s*:\s*(?P<attribute>.*?)\s*,\s*value\s*:\s*(?P<value>.*)$",
    re.IGNORECASE | re.DOTALL,
)


class Task(str, enum.Enum):
    VE = "VE"
    AG = "AG"
    E2E = "E2E"


class Strategy(str, enum.Enum):
    PIPELINE = "pipeline"
    MULTITASK = "multitask"
    END2END = "end2end"


@dataclass(frozen=True)
class TaskExample:
    source: str
    target: str
    task: Task


@dataclass
class ParseReport:
    parsed: list = field(default_factory=list)
    malformed_segments: int = 0
    duplicates: int = 0
    raw: str = ""


@dataclass
class BuildReport:
    records: int = 0
    empty_records: int = 0
    ag_values_not_found: int = 0
    examples: int = 0


def flatten_values(values: Sequence[str]) -> str:
    cleaned = [sanitize(v) for v in values]
    return SEPARATOR.join(v for v in cleaned if v)


def _segments(generated: str) -> list[str]:
    if not generated.strip():
        return []
    return [seg.strip() for seg in generated.split("|")]


def parse_values(generated: str) -> ParseReport:
    report = ParseReport(raw=generated)
    seen = set()
    for seg in _segments(generated):
        if not seg:
            report.malformed_segments += 1
        elif seg in seen:
            report.duplicates += 1
        else:
            seen.add(seg)
            report.parsed.append(seg)
    return report


def strip_highlight(text: str) -> str:
    return " ".join(text.replace(HIGHLIGHT, " ").split()) if HIGHLIGHT in text else text


def highlight_value(text: str, value: str) -> str | None:
    """Wrap the first case-insensitive occurrence of ``value`` in ``<hl>`` tokens.

    Returns None when ``value`` does not occur in ``text``. The surface form
    from ``text`` is kept.
    """
    if not value:
        return None
    m = re.search(re.escape(value), text, re.IGNORECASE)
    if m is None:
        return None
    start, end = m.span()
    return f"{text[:start]}{HIGHLIGHT} {text[start:end]} {HIGHLIGHT}{text[end:]}"


def render_pair(pair: AttrValuePair) -> str:
    return f"attribute: {sanitize(pair.attribute)}, value: {sanitize(pair.value)}"


def render_pairs(pairs: Sequence[AttrValuePair]) -> str:
    return SEPARATOR.join(render_pair(p) for p in pairs)


def parse_pairs(generated: str) -> ParseReport:
    report = ParseReport(raw=generated)
    seen = set()
    for seg in _segments(generated):
        m = _TEMPLATE.match(seg)
        if m is None:
            report.malformed_segments += 1
            continue
        pair = AttrValuePair(m["attribute"].strip(), m["value"].strip())
        if not pair.is_valid():
            report.malformed_segments += 1
        elif pair in seen:
            report.duplicates += 1
        else:
            seen.add(pair)
            report.parsed.append(pair)
    return report


def add_task_prefix(task: Task | str, source: str) -> str:
    task = Task(task)
    if task is Task.VE:
        return VE_PREFIX + source
    if task is Task.AG:
        return AG_PREFIX + source
    raise ValueError(f"no prefix for task {task.value}")


def make_training_examples(
    record: ProductRecord, strategy: Strategy | str, report: BuildReport | None = None
) -> list[TaskExample]:
    """Training instances for one record.

    Pipeline and multitask emit one value-extraction example and one
    attribute-generation example per gold pair whose value occurs in the
    text (multitask adds task prefixes). End2end emits a single example.
    """
    strategy = Strategy(strategy)
    report = report if report is not None else BuildReport()
    report.records += 1
    text = strip_highlight(record.text)
    pairs = [AttrValuePair.clean(p.attribute, p.value) for p in record.pairs]
    pairs = [p for p in pairs if p.is_valid()]
    if not pairs or not text.strip():
        report.empty_records += 1
        return []

    if strategy is Strategy.END2END:
        out = [TaskExample(text, render_pairs(pairs), Task.E2E)]
        report.examples += 1
        return out

    prefixed = strategy is Strategy.MULTITASK
    values = list(dict.fromkeys(p.value for p in pairs))
    ve_source = add_task_prefix(Task.VE, text) if prefixed else text
    out = [TaskExample(ve_source, flatten_values(values), Task.VE)]
    for pair in pairs:
        marked = highlight_value(text, pair.value)
        if marked is None:
            report.ag_values_not_found += 1
            continue
        source = add_task_prefix(Task.AG, marked) if prefixed else marked
        out.append(TaskExample(source, pair.attribute, Task.AG))
    report.examples += len(out)
    return out
