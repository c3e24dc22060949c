"""Structured-value acquisition: pattern extraction, adapter files, DB dumps.

Three sources produce the same record type:

* a built-in pattern/lexicon extractor run over free text,
* JSON-lines files written by external extraction engines,
* JSON-lines dumps of database measurements.

Downstream steps (measurement selection, roll-up, encoding) treat all of
them uniformly.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, DataError

RECORD_KINDS = ("measurement", "condition", "medication", "test_result", "other")
PROVENANCES = ("text_extraction", "external_extractor", "database")

# Canonical ordering for roll-up aggregates; policies are normalized to it.
AGGREGATES = ("mean", "median", "min", "max", "first", "last", "count")


@dataclass(frozen=True)
class StructuredRecord:
    """One named value pulled from text, an extractor file, or a database.

    ``value`` is a number for measurements and a string for categorical
    data (conditions, medications, test results).
    """

    name: str
    value: float | int | str
    kind: str = "measurement"
    provenance: str = "text_extraction"
    encounter_id: str | None = None
    doc_index: int | None = None
    span: tuple[int, int] | None = None
    unit: str | None = None

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, (int, float)) and not isinstance(self.value, bool)


@dataclass(frozen=True)
class MeasurementFilter:
    """Which variables to keep, judged by per-occurrence name counts."""

    mode: str = "all"
    min_count: int | None = None
    max_count: int | None = None
    n: int | None = None
    m: int | None = None

    def __post_init__(self):
        if self.mode == "all":
            return
        if self.mode == "count_range":
            if self.min_count is None or self.max_count is None or self.min_count > self.max_count:
                raise ConfigError("count_range filter needs min_count <= max_count")
        elif self.mode == "top_n":
            if not self.n or self.n < 1:
                raise ConfigError("top_n filter needs n >= 1")
        elif self.mode == "top_n_excluding_top_m":
            if not self.n or self.n < 1 or self.m is None or self.m < 0:
                raise ConfigError("top_n_excluding_top_m filter needs n >= 1 and m >= 0")
        else:
            raise ConfigError(f"unknown measurement filter mode: {self.mode!r}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "MeasurementFilter":
        return cls(
            mode=d.get("mode", "all"),
            min_count=d.get("min_count"),
            max_count=d.get("max_count"),
            n=d.get("n"),
            m=d.get("m"),
        )

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        for key in ("min_count", "max_count", "n", "m"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


@dataclass(frozen=True)
class RollupPolicy:
    """Aggregates emitted per (encounter, variable) group of numeric readings."""

    aggregates: tuple[str, ...] = ("mean", "min", "max")

    def __post_init__(self):
        if not self.aggregates:
            raise ConfigError("roll-up policy needs at least one aggregate")
        bad = [a for a in self.aggregates if a not in AGGREGATES]
        if bad:
            raise ConfigError(f"unknown roll-up aggregates: {bad}")
        # normalize to canonical order so output ordering is stable
        wanted = set(self.aggregates)
        object.__setattr__(self, "aggregates", tuple(a for a in AGGREGATES if a in wanted))


_DEFAULT_NUMBER = r"([-+]?\d+(?:\.\d+)?)"


@dataclass
class PatternConfig:
    """Alias table, numeric patterns, and categorical lexicon for extraction."""

    aliases: dict[str, str] = field(default_factory=dict)
    numeric_patterns: list[tuple[str, re.Pattern]] = field(default_factory=list)
    lexicon: list[tuple[str, str, str, str]] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PatternConfig":
        try:
            aliases = dict(d.get("aliases", {}))
            patterns = []
            for item in d.get("numeric_patterns", []):
                pat = re.compile(item["pattern"], re.IGNORECASE)
                if pat.groups < 1:
                    raise ConfigError(
                        f"numeric pattern for {item['variable']!r} needs a capture group"
                    )
                patterns.append((item["variable"], pat))
            lexicon = []
            for item in d.get("lexicon", []):
                lexicon.append(
                    (
                        item["phrase"],
                        item["name"],
                        str(item["value"]),
                        item.get("kind", "condition"),
                    )
                )
        except ConfigError:
            raise
        except (KeyError, TypeError, re.error) as exc:
            raise ConfigError(f"malformed pattern config: {exc}") from exc
        for surface, canon in aliases.items():
            if not surface or not canon:
                raise ConfigError("alias entries must be nonempty strings")
        return cls(aliases=aliases, numeric_patterns=patterns, lexicon=lexicon)

    @classmethod
    def from_file(cls, path: str | Path) -> "PatternConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"pattern config {path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "aliases": dict(self.aliases),
            "numeric_patterns": [
                {"variable": var, "pattern": pat.pattern} for var, pat in self.numeric_patterns
            ],
            "lexicon": [
                {"phrase": p, "name": n, "value": v, "kind": k} for p, n, v, k in self.lexicon
            ],
        }


def default_pattern_config() -> PatternConfig:
    """A small vitals-and-conditions config usable without any setup."""
    return PatternConfig.from_dict(
        {
            "aliases": {
                "Temp": "Temp",
                "Temperature": "Temp",
                "BP": "BP",
                "Pulse": "Pulse",
                "HR": "Pulse",
                "RR": "RR",
                "Glucose": "Glucose",
                "SpO2": "SpO2",
                "Weight": "Weight",
            },
            "lexicon": [
                {"phrase": "lung cancer", "name": "Previous_condition", "value": "lung_cancer", "kind": "condition"},
                {"phrase": "diabetes", "name": "Previous_condition", "value": "diabetes", "kind": "condition"},
                {"phrase": "hypertension", "name": "Previous_condition", "value": "hypertension", "kind": "condition"},
                {"phrase": "pneumonia", "name": "Previous_condition", "value": "pneumonia", "kind": "condition"},
            ],
        }
    )


def extract_patterns(text: str, config: PatternConfig) -> list[StructuredRecord]:
    """Run the built-in extractor over one document's text.

    Candidate matches come from alias-derived numeric patterns, explicit
    numeric patterns, and lexicon phrases. Overlaps are resolved
    leftmost-longest, so the result spans never intersect.
    """
    candidates: list[tuple[int, int, StructuredRecord]] = []

    for surface, canonical in config.aliases.items():
        pat = re.compile(
            rf"\b{re.escape(surface)}\b\s*(?:=|:|is|was|of)?\s*{_DEFAULT_NUMBER}",
            re.IGNORECASE,
        )
        for match in pat.finditer(text):
            candidates.append(
                (
                    match.start(),
                    match.end(),
                    StructuredRecord(
                        name=canonical,
                        value=float(match.group(1)),
                        kind="measurement",
                        provenance="text_extraction",
                        span=(match.start(), match.end()),
                    ),
                )
            )

    for variable, pat in config.numeric_patterns:
        for match in pat.finditer(text):
            try:
                value = float(match.group(1))
            except (TypeError, ValueError):
                continue
            candidates.append(
                (
                    match.start(),
                    match.end(),
                    StructuredRecord(
                        name=variable,
                        value=value,
                        kind="measurement",
                        provenance="text_extraction",
                        span=(match.start(), match.end()),
                    ),
                )
            )

    for phrase, name, value, kind in config.lexicon:
        pat = re.compile(rf"\b{re.escape(phrase)}\b", re.IGNORECASE)
        for match in pat.finditer(text):
            candidates.append(
                (
                    match.start(),
                    match.end(),
                    StructuredRecord(
                        name=name,
                        value=value,
                        kind=kind if kind in RECORD_KINDS else "other",
                        provenance="text_extraction",
                        span=(match.start(), match.end()),
                    ),
                )
            )

    # leftmost-longest, deterministic tie-break on name
    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0]), c[2].name))
    selected: list[StructuredRecord] = []
    cursor = 0
    for start, end, record in candidates:
        if start >= cursor:
            selected.append(record)
            cursor = end
    return selected


def _parse_record_line(obj: dict, provenance: str, lineno: int) -> StructuredRecord:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: expected a JSON object")
    eid = obj.get("encounter_id")
    if not isinstance(eid, str) or not eid:
        raise DataError(f"line {lineno}: missing or empty 'encounter_id'")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise DataError(f"line {lineno}: missing or empty 'name'")
    value = obj.get("value")
    if isinstance(value, bool) or value is None:
        raise DataError(f"line {lineno}: 'value' must be a number or string")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise DataError(f"line {lineno}: numeric 'value' must be finite")
    elif not isinstance(value, str):
        raise DataError(f"line {lineno}: 'value' must be a number or string")
    kind = obj.get("kind")
    if kind is None:
        kind = "measurement" if isinstance(value, (int, float)) else "other"
    elif kind not in RECORD_KINDS:
        kind = "other"
    doc_index = obj.get("doc_index")
    if doc_index is not None and (not isinstance(doc_index, int) or doc_index < 0):
        raise DataError(f"line {lineno}: 'doc_index' must be a non-negative integer")
    span = obj.get("span")
    if span is not None:
        if (
            not isinstance(span, (list, tuple))
            or len(span) != 2
            or not all(isinstance(x, int) for x in span)
            or span[0] > span[1]
        ):
            raise DataError(f"line {lineno}: 'span' must be [start, end] with start <= end")
        span = (span[0], span[1])
    unit = obj.get("unit")
    if unit is not None and not isinstance(unit, str):
        raise DataError(f"line {lineno}: 'unit' must be a string")
    return StructuredRecord(
        name=name,
        value=value,
        kind=kind,
        provenance=provenance,
        encounter_id=eid,
        doc_index=doc_index,
        span=span,
        unit=unit,
    )


def _load_record_file(path: str | Path, provenance: str) -> list[StructuredRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            records.append(_parse_record_line(obj, provenance, lineno))
    return records


def load_external_extractions(path: str | Path) -> list[StructuredRecord]:
    """Load records written by an external extraction engine."""
    return _load_record_file(path, "external_extractor")


def load_db_measurements(path: str | Path) -> list[StructuredRecord]:
    """Load raw database measurements. Repeated readings are kept as-is;
    roll-up is a separate step."""
    return _load_record_file(path, "database")


def variable_counts(records: Iterable[StructuredRecord]) -> Counter:
    """Per-occurrence counts by variable name."""
    return Counter(r.name for r in records)


def allowed_variables(counts: Mapping[str, int], filt: MeasurementFilter) -> set[str]:
    """Variable names that pass the filter, given per-occurrence counts."""
    if filt.mode == "all":
        return set(counts)
    if filt.mode == "count_range":
        return {n for n, c in counts.items() if filt.min_count <= c <= filt.max_count}
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if filt.mode == "top_n":
        return {n for n, _ in ranked[: filt.n]}
    return {n for n, _ in ranked[filt.m : filt.m + filt.n]}


def select_measurements(
    records: Sequence[StructuredRecord],
    filt: MeasurementFilter,
    counts: Mapping[str, int] | None = None,
) -> list[StructuredRecord]:
    """Keep records whose variable name passes the filter; order preserved.

    ``counts`` should come from training-side records when filtering test
    data; it defaults to counting over ``records`` itself.
    """
    if filt.mode == "all":
        return list(records)
    if counts is None:
        counts = variable_counts(records)
    keep = allowed_variables(counts, filt)
    return [r for r in records if r.name in keep]


def _aggregate(agg: str, values: list[float]) -> float:
    if agg == "mean":
        return sum(values) / len(values)
    if agg == "median":
        ordered = sorted(values)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            return ordered[mid]
        return (ordered[mid - 1] + ordered[mid]) / 2.0
    if agg == "min":
        return min(values)
    if agg == "max":
        return max(values)
    if agg == "first":
        return values[0]
    if agg == "last":
        return values[-1]
    if agg == "count":
        return float(len(values))
    raise ConfigError(f"unknown aggregate: {agg}")


def rollup(
    records: Sequence[StructuredRecord],
    policy: RollupPolicy,
    provenances: tuple[str, ...] | None = None,
) -> list[StructuredRecord]:
    """Aggregate repeated numeric readings per (encounter, variable).

    Each group collapses to one record per aggregate, named
    ``{variable}_{aggregate}``. Categorical records pass through unchanged,
    as do numeric records whose provenance is outside ``provenances``
    (``None`` means roll up everything). Aggregated records appear at the
    position of the group's first reading.
    """
    groups: dict[tuple[str | None, str], list[StructuredRecord]] = {}
    rollable = []
    for rec in records:
        is_target = rec.is_numeric and (provenances is None or rec.provenance in provenances)
        rollable.append(is_target)
        if is_target:
            groups.setdefault((rec.encounter_id, rec.name), []).append(rec)

    out: list[StructuredRecord] = []
    emitted: set[tuple[str | None, str]] = set()
    for rec, is_target in zip(records, rollable):
        if not is_target:
            out.append(rec)
            continue
        key = (rec.encounter_id, rec.name)
        if key in emitted:
            continue
        emitted.add(key)
        group = groups[key]
        values = [float(r.value) for r in group]
        first = group[0]
        for agg in policy.aggregates:
            out.append(
                StructuredRecord(
                    name=f"{rec.name}_{agg}",
                    value=_aggregate(agg, values),
                    kind=first.kind,
                    provenance=first.provenance,
                    encounter_id=first.encounter_id,
                    doc_index=None,
                    span=None,
                    unit=first.unit,
                )
            )
    return out
