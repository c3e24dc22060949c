"""Turn structured records into DataWords sentences.

A numeric value is binned against per-variable cuts into one of five
ranges and becomes a one- or two-token sentence such as

    dw__Temp__mid_range.
    dw__Temp__high_range dw__Temp__very_high_range.

so that similar values collapse to identical text. Categorical values map
to a single token like ``dw__Previous_condition__lung_cancer.``. Each
record gets exactly one sentence, written on its own line so the sentence
splitter keeps per-record granularity for explanations.

Cuts come either from clinician-specified thresholds or automatically
from training statistics: (mean - 1.7 sd, mean - 1.0 sd, mean + 1.0 sd,
mean + 1.7 sd) by default. The extreme bins deliberately emit the
neighboring bin's token too, so a model can key on "high or above"
without learning two disjoint vocabularies.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, InputError, UnresolvedVariableError
from .extraction import StructuredRecord

logger = logging.getLogger(__name__)

BIN_LABELS = ("very_low", "low", "mid", "high", "very_high")

# token suffixes emitted per bin; extremes carry their neighbor's token
BIN_TOKENS = {
    "very_low": ("low_range", "very_low_range"),
    "low": ("low_range",),
    "mid": ("mid_range",),
    "high": ("high_range",),
    "very_high": ("high_range", "very_high_range"),
}

BIN_PHRASES = {
    "very_low": "very low",
    "low": "low",
    "mid": "in normal range",
    "high": "high",
    "very_high": "very high",
}

ABLATION_MODES = (
    "text_only",
    "text_plus_datawords",
    "datawords_only",
    "nonnumeric_datawords_only",
)

DEFAULT_K_LOW = 1.7
DEFAULT_K_MID = 1.0

_SANITIZE_RE = re.compile(r"[^0-9A-Za-z]+")


@dataclass(frozen=True)
class VariableStats:
    """Count, mean, and population standard deviation of one numeric variable."""

    name: str
    count: int
    mean: float
    std: float


def compute_stats(records: Iterable[StructuredRecord]) -> dict[str, VariableStats]:
    """Mean and population standard deviation per numeric variable.

    Must be fed training-side records only. Variables with no numeric
    readings are simply absent from the result.
    """
    values: dict[str, list[float]] = {}
    for rec in records:
        if rec.is_numeric:
            values.setdefault(rec.name, []).append(float(rec.value))
    stats = {}
    for name, vals in values.items():
        n = len(vals)
        mean = sum(vals) / n
        var = sum((v - mean) ** 2 for v in vals) / n
        stats[name] = VariableStats(name=name, count=n, mean=mean, std=math.sqrt(var))
    return stats


@dataclass(frozen=True)
class ThresholdSpec:
    """Per-variable binning thresholds.

    Each variable maps either to explicit cuts (c1 < c2 < c3 < c4) or to
    automatic sigma multipliers applied to training statistics. A default
    entry covers unlisted variables. Entries may carry a display name used
    in natural renderings.
    """

    explicit: dict[str, tuple[float, float, float, float]]
    auto: dict[str, tuple[float, float]]
    default_auto: tuple[float, float] = (DEFAULT_K_LOW, DEFAULT_K_MID)
    display_names: dict[str, str] | None = None

    def __post_init__(self):
        for name, cuts in self.explicit.items():
            if len(cuts) != 4 or not all(cuts[i] < cuts[i + 1] for i in range(3)):
                raise ConfigError(f"cuts for {name!r} must be four strictly increasing numbers")
        for name, (k_low, k_mid) in list(self.auto.items()) + [("default", self.default_auto)]:
            if not (k_low > k_mid > 0):
                raise ConfigError(
                    f"auto thresholds for {name!r} need k_low > k_mid > 0, got ({k_low}, {k_mid})"
                )

    @classmethod
    def defaults(cls) -> "ThresholdSpec":
        return cls(explicit={}, auto={}, display_names={})

    @classmethod
    def from_dict(cls, d: Mapping) -> "ThresholdSpec":
        explicit: dict[str, tuple[float, float, float, float]] = {}
        auto: dict[str, tuple[float, float]] = {}
        display: dict[str, str] = {}
        default_auto = (DEFAULT_K_LOW, DEFAULT_K_MID)
        for name, entry in d.items():
            if not isinstance(entry, Mapping):
                raise ConfigError(f"threshold entry for {name!r} must be an object")
            if "display" in entry:
                display[name] = str(entry["display"])
            if "cuts" in entry:
                cuts = entry["cuts"]
                if not isinstance(cuts, Sequence) or len(cuts) != 4:
                    raise ConfigError(f"cuts for {name!r} must list four numbers")
                explicit[name] = tuple(float(c) for c in cuts)
            elif "auto" in entry:
                params = entry["auto"]
                pair = (
                    float(params.get("k_low", DEFAULT_K_LOW)),
                    float(params.get("k_mid", DEFAULT_K_MID)),
                )
                if name == "default":
                    default_auto = pair
                else:
                    auto[name] = pair
            elif name != "default" and "display" not in entry:
                raise ConfigError(f"threshold entry for {name!r} needs 'cuts' or 'auto'")
        return cls(explicit=explicit, auto=auto, default_auto=default_auto, display_names=display)

    @classmethod
    def from_file(cls, path: str | Path) -> "ThresholdSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"threshold spec {path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"threshold spec {path}: expected a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out: dict[str, dict] = {}
        for name, cuts in sorted(self.explicit.items()):
            out[name] = {"cuts": list(cuts)}
        for name, (k_low, k_mid) in sorted(self.auto.items()):
            out[name] = {"auto": {"k_low": k_low, "k_mid": k_mid}}
        out.setdefault("default", {})["auto"] = {
            "k_low": self.default_auto[0],
            "k_mid": self.default_auto[1],
        }
        for name, disp in sorted((self.display_names or {}).items()):
            out.setdefault(name, {})["display"] = disp
        return out

    def resolve_cuts(
        self, name: str, stats: Mapping[str, VariableStats]
    ) -> tuple[float, float, float, float] | None:
        """Cuts for a variable: explicit, else auto from stats, else None."""
        if name in self.explicit:
            return self.explicit[name]
        st = stats.get(name)
        if st is None:
            return None
        k_low, k_mid = self.auto.get(name, self.default_auto)
        return (
            st.mean - k_low * st.std,
            st.mean - k_mid * st.std,
            st.mean + k_mid * st.std,
            st.mean + k_low * st.std,
        )

    def display_name(self, name: str) -> str:
        if self.display_names and name in self.display_names:
            return self.display_names[name]
        return _SANITIZE_RE.sub(" ", name).strip()


def bin_value(value: float, cuts: Sequence[float]) -> str:
    """Place a value into one of the five range bins.

    Boundaries belong to the upper bin: every rule is "less than", so a
    value equal to a cut falls through to the next clause.
    """
    if not math.isfinite(value):
        raise InputError(f"cannot bin non-finite value {value!r}")
    c1, c2, c3, c4 = cuts
    if value < c1:
        return "very_low"
    if value < c2:
        return "low"
    if value < c3:
        return "mid"
    if value < c4:
        return "high"
    return "very_high"


def sanitize_name(name: str) -> str:
    """Collapse non-alphanumeric runs to single underscores, keeping case."""
    out = _SANITIZE_RE.sub("_", name).strip("_")
    if not out:
        raise InputError(f"variable name {name!r} sanitizes to nothing")
    return out


def sanitize_value(value: str) -> str:
    """Lowercase and collapse non-alphanumeric runs to single underscores."""
    out = _SANITIZE_RE.sub("_", value.lower()).strip("_")
    if not out:
        raise InputError(f"categorical value {value!r} sanitizes to nothing")
    return out


@dataclass(frozen=True)
class DataWordSentence:
    """The one-sentence text encoding of a single structured record."""

    tokens: tuple[str, ...]
    source: StructuredRecord
    bin_label: str | None
    display_name: str

    @property
    def text(self) -> str:
        return " ".join(self.tokens) + "."

    @property
    def is_numeric(self) -> bool:
        return self.bin_label is not None

    @property
    def display(self) -> str:
        return render_natural(self)


def _format_value(value: float | int | str) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_natural(sentence: DataWordSentence) -> str:
    """Human-readable rendering for a DataWords sentence.

    Numeric: "{display name} was {bin phrase} [{raw value}]", where the
    phrase reflects the highest bin when two tokens are present.
    Categorical: "{display name}: {value}".
    """
    rec = sentence.source
    if sentence.bin_label is not None:
        phrase = BIN_PHRASES[sentence.bin_label]
        return f"{sentence.display_name} was {phrase} [{_format_value(rec.value)}]"
    return f"{sentence.display_name}: {sanitize_value(str(rec.value))}"


def encode_record(
    record: StructuredRecord,
    spec: ThresholdSpec,
    stats: Mapping[str, VariableStats],
) -> DataWordSentence:
    """Encode one record as a DataWords sentence.

    Numeric records need cuts resolvable from the spec (explicit, or auto
    via stats); otherwise UnresolvedVariableError is raised and pipeline
    callers skip the record with a warning. Categorical records never
    consult stats.
    """
    name_token = sanitize_name(record.name)
    display = spec.display_name(record.name)
    if record.is_numeric:
        cuts = spec.resolve_cuts(record.name, stats)
        if cuts is None:
            raise UnresolvedVariableError(
                f"no cuts or statistics for numeric variable {record.name!r}"
            )
        if cuts[0] == cuts[3]:
            logger.warning(
                "degenerate cuts for %r (zero spread); binning carries no information",
                record.name,
            )
        label = bin_value(float(record.value), cuts)
        tokens = tuple(f"dw__{name_token}__{suffix}" for suffix in BIN_TOKENS[label])
        return DataWordSentence(tokens=tokens, source=record, bin_label=label, display_name=display)
    value_token = sanitize_value(str(record.value))
    return DataWordSentence(
        tokens=(f"dw__{name_token}__{value_token}",),
        source=record,
        bin_label=None,
        display_name=display,
    )


def encode_records(
    records: Iterable[StructuredRecord],
    spec: ThresholdSpec,
    stats: Mapping[str, VariableStats],
) -> list[DataWordSentence]:
    """Encode many records, skipping unresolvable ones with a warning."""
    out = []
    for rec in records:
        try:
            out.append(encode_record(rec, spec, stats))
        except UnresolvedVariableError as exc:
            logger.warning("skipping record: %s", exc)
    return out


def augment_document(
    doc_text: str,
    sentences: Sequence[DataWordSentence],
    mode: str = "text_plus_datawords",
) -> str:
    """Combine a document's text with its DataWords sentences per mode.

    Every DataWords sentence goes on its own line so the sentence splitter
    isolates it. ``nonnumeric_datawords_only`` keeps only sentences from
    categorical records.
    """
    if mode not in ABLATION_MODES:
        raise ConfigError(f"unknown ablation mode: {mode!r}")
    if mode == "text_only":
        return doc_text
    if mode == "nonnumeric_datawords_only":
        lines = [s.text for s in sentences if not s.is_numeric]
    else:
        lines = [s.text for s in sentences]
    if mode == "text_plus_datawords":
        if not lines:
            return doc_text
        return "\n".join([doc_text] + lines) if doc_text else "\n".join(lines)
    return "\n".join(lines)
