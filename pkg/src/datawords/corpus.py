"""Corpus loading, sentence splitting, tokenization, and fold assignment.

The corpus format is UTF-8 JSON-lines, one object per encounter:

    {"encounter_id": "e1",
     "documents": ["free text ..."],
     "codes": ["A01", "B20"],
     "structured": [{"name": "Temp", "value": 98.8, "unit": "F"}]}

``codes`` and ``structured`` are optional; unknown fields are ignored.
All operations here are pure and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError
from .extraction import RECORD_KINDS, StructuredRecord

_TOKEN_RE = re.compile(r"\w+")
_TERMINATORS = ".!?"


@dataclass(frozen=True)
class Sentence:
    """One sentence of a (possibly augmented) document.

    ``kind`` is "dataword" only for sentences produced by the structured
    -value encoder; ``display`` carries their natural-language rendering.
    """

    text: str
    doc_index: int
    sent_index: int
    kind: str = "text"
    display: str | None = None


@dataclass(frozen=True)
class Encounter:
    """One patient encounter: documents, gold label set, structured values."""

    encounter_id: str
    documents: tuple[str, ...]
    codes: frozenset[str] = field(default_factory=frozenset)
    structured: tuple[StructuredRecord, ...] = ()

    def __post_init__(self):
        if not self.encounter_id:
            raise DataError("encounter_id must be nonempty")
        if not self.documents:
            raise DataError(f"encounter {self.encounter_id!r}: documents must be nonempty")


@dataclass(frozen=True)
class FoldSplit:
    """Assignment of encounter ids to folds, balanced to within one."""

    fold_count: int
    assignment: dict[str, int]

    def train_ids(self, fold: int) -> list[str]:
        return [eid for eid, f in self.assignment.items() if f != fold]

    def test_ids(self, fold: int) -> list[str]:
        return [eid for eid, f in self.assignment.items() if f == fold]


def tokenize(text: str) -> list[str]:
    """Lowercase and split into maximal runs of letters, digits, underscores.

    Underscore is part of the token alphabet so encoded structured-value
    tokens like ``dw__Temp__mid_range`` survive as single tokens.
    """
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str, doc_index: int = 0) -> list[Sentence]:
    """Split text into sentences on '.', '!', '?', and newline.

    The terminator stays attached to the left sentence; surrounding
    whitespace is stripped; empty pieces are dropped. No abbreviation
    handling, by design: the rule must be reproducible on noisy notes.
    """
    sentences: list[Sentence] = []
    buf: list[str] = []

    def flush():
        piece = "".join(buf).strip()
        buf.clear()
        if piece:
            sentences.append(Sentence(text=piece, doc_index=doc_index, sent_index=len(sentences)))

    for ch in text:
        if ch in _TERMINATORS:
            buf.append(ch)
            flush()
        elif ch == "\n":
            flush()
        else:
            buf.append(ch)
    flush()
    return sentences


def _parse_structured_entry(obj, eid: str, lineno: int) -> StructuredRecord:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: structured entries must be objects")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise DataError(f"line {lineno}: structured entry missing 'name'")
    value = obj.get("value")
    if isinstance(value, bool) or value is None:
        raise DataError(f"line {lineno}: structured 'value' must be a number or string")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise DataError(f"line {lineno}: structured numeric 'value' must be finite")
    elif not isinstance(value, str):
        raise DataError(f"line {lineno}: structured 'value' must be a number or string")
    kind = obj.get("kind")
    if kind is None:
        kind = "measurement" if isinstance(value, (int, float)) else "other"
    elif kind not in RECORD_KINDS:
        kind = "other"
    unit = obj.get("unit")
    if unit is not None and not isinstance(unit, str):
        raise DataError(f"line {lineno}: structured 'unit' must be a string")
    return StructuredRecord(
        name=name,
        value=value,
        kind=kind,
        provenance="database",
        encounter_id=eid,
        unit=unit,
    )


def load_corpus(path: str | Path, schema: str = "jsonl") -> list[Encounter]:
    """Load and validate a corpus file, preserving file order.

    Raises DataError naming the offending line for malformed records,
    duplicate encounter ids, duplicate codes, or invalid field types.
    """
    if schema != "jsonl":
        raise ConfigError(f"unknown corpus schema: {schema!r}")
    encounters: list[Encounter] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"line {lineno}: expected a JSON object")
            eid = obj.get("encounter_id")
            if not isinstance(eid, str) or not eid:
                raise DataError(f"line {lineno}: missing or empty 'encounter_id'")
            if eid in seen:
                raise DataError(
                    f"line {lineno}: duplicate encounter_id {eid!r} (first seen on line {seen[eid]})"
                )
            seen[eid] = lineno
            docs = obj.get("documents")
            if not isinstance(docs, list) or not docs or not all(isinstance(d, str) for d in docs):
                raise DataError(f"line {lineno}: 'documents' must be a nonempty list of strings")
            codes = obj.get("codes", [])
            if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
                raise DataError(f"line {lineno}: 'codes' must be a list of strings")
            if len(set(codes)) != len(codes):
                raise DataError(f"line {lineno}: 'codes' contains duplicates")
            structured_raw = obj.get("structured", [])
            if not isinstance(structured_raw, list):
                raise DataError(f"line {lineno}: 'structured' must be a list")
            structured = tuple(
                _parse_structured_entry(entry, eid, lineno) for entry in structured_raw
            )
            encounters.append(
                Encounter(
                    encounter_id=eid,
                    documents=tuple(docs),
                    codes=frozenset(codes),
                    structured=structured,
                )
            )
    return encounters


def save_corpus(encounters: Iterable[Encounter], path: str | Path) -> None:
    """Write encounters in the JSON-lines corpus format (deterministic bytes)."""
    with open(path, "w", encoding="utf-8") as fh:
        for enc in encounters:
            obj = {
                "encounter_id": enc.encounter_id,
                "documents": list(enc.documents),
                "codes": sorted(enc.codes),
            }
            if enc.structured:
                obj["structured"] = [
                    {
                        "name": r.name,
                        "value": r.value,
                        **({"unit": r.unit} if r.unit else {}),
                        "kind": r.kind,
                    }
                    for r in enc.structured
                ]
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def kfold_split(encounters: Sequence[Encounter], k: int, seed: int) -> FoldSplit:
    """Assign whole encounters to k folds, sizes balanced to within one.

    Encounter ids are ordered by a seeded hash and dealt round-robin, so
    the split is reproducible and stable under corpus reordering.
    """
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    if len(encounters) < k:
        raise ConfigError(f"need at least {k} encounters for {k} folds, got {len(encounters)}")
    ids = [e.encounter_id for e in encounters]
    if len(set(ids)) != len(ids):
        raise DataError("corpus contains duplicate encounter ids")

    def sort_key(eid: str):
        digest = hashlib.sha256(f"{seed}|{eid}".encode("utf-8")).hexdigest()
        return (digest, eid)

    ordered = sorted(ids, key=sort_key)
    assignment = {eid: pos % k for pos, eid in enumerate(ordered)}
    return FoldSplit(fold_count=k, assignment=assignment)
