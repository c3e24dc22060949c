"""Per-label linear models over augmented documents, with threshold fitting.

Training runs the whole pipeline: structured-record collection, measurement
selection, roll-up, statistics, DataWords encoding, augmentation,
vocabulary and tf-idf fitting, then one ridge regressor per label with an
F1-maximizing decision threshold. Everything needed to score new
encounters is frozen into a ModelBundle, so prediction re-runs the exact
same encoding with training-time statistics and cuts.

The regressor minimizes sum((w.x + b - y)^2) + lambda * ||w||^2 with an
unpenalized bias, solved by conjugate gradient on the normal equations
(start at zero, relative tolerance 1e-10, iteration cap 10 * dimension),
which keeps fits deterministic and cheap for thousands of labels.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .corpus import Encounter, Sentence, split_sentences
from .encoding import (
    ABLATION_MODES,
    DataWordSentence,
    ThresholdSpec,
    VariableStats,
    augment_document,
    compute_stats,
    encode_records,
)
from .errors import ConfigError, DataError, InputError, UnsupportedVersionError
from .extraction import (
    MeasurementFilter,
    PatternConfig,
    RollupPolicy,
    StructuredRecord,
    allowed_variables,
    default_pattern_config,
    extract_patterns,
    rollup,
    variable_counts,
)
from .vectorize import (
    TfIdfModel,
    Vocabulary,
    build_vocabulary,
    fit_hashed_idf,
    fit_idf,
    stack_vectors,
    vectorize_document,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"

EXTRACTION_SOURCES = ("patterns", "external", "db", "none")
UNIT_KINDS = ("document", "encounter")


@dataclass
class PipelineConfig:
    """Everything that parameterizes training, prediction, and evaluation.

    ``threads`` is an execution detail and is excluded from the config
    digest; runs with different thread counts must produce identical
    outputs.
    """

    ablation_mode: str = "text_plus_datawords"
    unit: str = "document"
    lam: float = 1.0
    min_positive: int = 1
    min_df: int = 1
    l2_normalize: bool = True
    hash_bits: int | None = None
    extraction_source: str = "patterns"
    pattern_config: PatternConfig | None = None
    measurement_filter: MeasurementFilter = field(default_factory=MeasurementFilter)
    rollup_policy: RollupPolicy = field(default_factory=RollupPolicy)
    rollup_provenances: tuple[str, ...] | None = ("database",)
    threshold_spec: ThresholdSpec = field(default_factory=ThresholdSpec.defaults)
    external_records: tuple[StructuredRecord, ...] | None = None
    folds: int = 4
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.ablation_mode not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode: {self.ablation_mode!r}")
        if self.unit not in UNIT_KINDS:
            raise ConfigError(f"unknown classification unit: {self.unit!r}")
        if self.extraction_source not in EXTRACTION_SOURCES:
            raise ConfigError(f"unknown extraction source: {self.extraction_source!r}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    def resolved_pattern_config(self) -> PatternConfig:
        return self.pattern_config if self.pattern_config is not None else default_pattern_config()

    def digest_dict(self) -> dict:
        """Stable description of the run for the report digest."""
        return {
            "ablation_mode": self.ablation_mode,
            "unit": self.unit,
            "lambda": self.lam,
            "min_positive": self.min_positive,
            "min_df": self.min_df,
            "l2_normalize": self.l2_normalize,
            "hash_bits": self.hash_bits,
            "extraction_source": self.extraction_source,
            "pattern_config": (
                self.pattern_config.to_dict() if self.pattern_config is not None else None
            ),
            "measurement_filter": self.measurement_filter.to_dict(),
            "rollup": list(self.rollup_policy.aggregates),
            "rollup_provenances": (
                list(self.rollup_provenances) if self.rollup_provenances is not None else None
            ),
            "threshold_spec": self.threshold_spec.to_dict(),
            "folds": self.folds,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class AugmentedUnit:
    """One classification unit: augmented text plus its sentence inventory."""

    encounter_id: str
    doc_index: int | None
    text: str
    sentences: tuple[Sentence, ...]
    gold: frozenset[str]


@dataclass
class LabelModel:
    """Weights, bias, and decision threshold for one label."""

    label: str
    indices: np.ndarray
    values: np.ndarray
    bias: float
    threshold: float

    def dense_weights(self, dimension: int) -> np.ndarray:
        w = np.zeros(dimension, dtype=np.float64)
        w[self.indices] = self.values
        return w


@dataclass(frozen=True)
class PredictionItem:
    label: str
    score: float
    predicted: bool


@dataclass(frozen=True)
class PredictionSet:
    """Scored labels for one unit, sorted by descending score."""

    encounter_id: str
    doc_index: int | None
    items: tuple[PredictionItem, ...]

    def predicted_labels(self) -> set[str]:
        return {it.label for it in self.items if it.predicted}


# ---------------------------------------------------------------------------
# ridge regression
# ---------------------------------------------------------------------------


def _as_matrix(X, dimension: int | None = None) -> sparse.csr_matrix:
    if sparse.issparse(X):
        return X.tocsr()
    vecs = list(X)
    if not vecs:
        raise InputError("need at least one sample")
    if dimension is None:
        dimension = vecs[0].dimension
    return stack_vectors(vecs, dimension)


def fit_label(
    X,
    y: Sequence[float],
    lam: float,
    fit_bias: bool = True,
    tol: float = 1e-10,
) -> tuple[np.ndarray, float]:
    """Ridge fit for one label; returns (weights, bias).

    X is a list of DocumentVector or a sparse matrix; y holds 0/1 targets.
    The bias column is not penalized.
    """
    if lam <= 0:
        raise InputError(f"lambda must be positive, got {lam}")
    Xm = _as_matrix(X)
    yv = np.asarray(y, dtype=np.float64)
    if Xm.shape[0] != yv.shape[0]:
        raise InputError(f"sample count mismatch: {Xm.shape[0]} rows vs {yv.shape[0]} targets")
    n, d = Xm.shape
    if fit_bias:
        ones = sparse.csr_matrix(np.ones((n, 1)))
        Xaug = sparse.hstack([Xm, ones], format="csr")
        dim = d + 1
        penalty = np.full(dim, lam, dtype=np.float64)
        penalty[d] = 0.0
    else:
        Xaug = Xm
        dim = d
        penalty = np.full(dim, lam, dtype=np.float64)

    rhs = Xaug.T @ yv
    rhs_norm = math.sqrt(float(np.dot(rhs, rhs)))
    x = np.zeros(dim, dtype=np.float64)
    if rhs_norm > 0.0:
        r = rhs.copy()
        p = r.copy()
        rs = float(np.dot(r, r))
        for _ in range(10 * dim):
            Ap = Xaug.T @ (Xaug @ p) + penalty * p
            pAp = float(np.dot(p, Ap))
            if pAp <= 0.0:
                break
            alpha = rs / pAp
            x += alpha * p
            r -= alpha * Ap
            rs_new = float(np.dot(r, r))
            if math.sqrt(rs_new) <= tol * rhs_norm:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
    if fit_bias:
        return x[:d], float(x[d])
    return x, 0.0


def _f1_from_counts(tp: float, fp: float, fn: float) -> float:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def fit_threshold(scores: Sequence[float], y: Sequence[int]) -> float:
    """Threshold maximizing F1 of "predict iff score >= threshold".

    Candidates are the midpoints of adjacent sorted unique scores plus
    (min - 1) and (max + 1); ties go to the lowest threshold. With no
    positive targets the label can never be predicted and the sentinel
    +inf is returned.
    """
    s = np.asarray(scores, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if s.size == 0:
        raise InputError("cannot fit a threshold on empty scores")
    if s.size != yv.size:
        raise InputError(f"scores and targets misaligned: {s.size} vs {yv.size}")
    n_pos = float(yv.sum())
    if n_pos == 0.0:
        return math.inf
    uniq = np.unique(s)
    cands = np.concatenate(
        [[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]]
    )
    pred = s[None, :] >= cands[:, None]
    tp = (pred & (yv == 1.0)[None, :]).sum(axis=1).astype(np.float64)
    npred = pred.sum(axis=1).astype(np.float64)
    fp = npred - tp
    fn = n_pos - tp
    best_f1 = -1.0
    best_t = cands[0]
    for i in range(len(cands)):
        f1 = _f1_from_counts(tp[i], fp[i], fn[i])
        if f1 > best_f1:
            best_f1 = f1
            best_t = cands[i]
    return float(best_t)


def combine_linear(p1: float, p2: float, w1: float, w2: float) -> float:
    """Weighted late fusion of two predictions: w1*p1 + w2*p2."""
    return w1 * p1 + w2 * p2


# ---------------------------------------------------------------------------
# record collection and unit assembly (shared by training and prediction)
# ---------------------------------------------------------------------------


def _key_external(records: Iterable[StructuredRecord]) -> dict[str, list[StructuredRecord]]:
    keyed: dict[str, list[StructuredRecord]] = {}
    for rec in records:
        keyed.setdefault(rec.encounter_id or "", []).append(rec)
    return keyed


def collect_structured_records(
    encounter: Encounter,
    source: str,
    pattern_config: PatternConfig | None = None,
    external_records: Sequence[StructuredRecord] | None = None,
) -> list[StructuredRecord]:
    """All structured records for one encounter: corpus-embedded ones plus
    whatever the configured source contributes."""
    return _collect_records(encounter, source, pattern_config, _key_external(external_records or ()))


def _collect_records(
    encounter: Encounter,
    source: str,
    pattern_config: PatternConfig | None,
    external: Mapping[str, list[StructuredRecord]],
) -> list[StructuredRecord]:
    records = list(encounter.structured)
    if source == "patterns":
        pc = pattern_config if pattern_config is not None else default_pattern_config()
        for di, doc in enumerate(encounter.documents):
            for rec in extract_patterns(doc, pc):
                records.append(
                    replace(rec, encounter_id=encounter.encounter_id, doc_index=di)
                )
    elif source in ("external", "db"):
        records.extend(external.get(encounter.encounter_id, []))
    return records


def _process_records(
    records: list[StructuredRecord],
    selected: set[str] | None,
    policy: RollupPolicy,
    provenances: tuple[str, ...] | None,
) -> list[StructuredRecord]:
    if selected is not None:
        records = [r for r in records if r.name in selected]
    return rollup(records, policy, provenances=provenances)


def _select_datawords(dws: Sequence[DataWordSentence], mode: str) -> list[DataWordSentence]:
    if mode == "text_only":
        return []
    if mode == "nonnumeric_datawords_only":
        return [s for s in dws if not s.is_numeric]
    return list(dws)


def _build_units(
    encounter: Encounter,
    records: list[StructuredRecord],
    spec: ThresholdSpec,
    stats: Mapping[str, VariableStats],
    mode: str,
    unit_kind: str,
) -> list[AugmentedUnit]:
    dws_all = encode_records(records, spec, stats)
    include_text = mode in ("text_only", "text_plus_datawords")
    units: list[AugmentedUnit] = []

    if unit_kind == "document":
        for di, doc in enumerate(encounter.documents):
            mine = [
                s
                for s in dws_all
                if s.source.doc_index == di or s.source.doc_index is None
            ]
            chosen = _select_datawords(mine, mode)
            sentences: list[Sentence] = []
            if include_text:
                sentences.extend(split_sentences(doc, doc_index=di))
            offset = len(sentences)
            for si, dws in enumerate(chosen):
                sentences.append(
                    Sentence(
                        text=dws.text,
                        doc_index=di,
                        sent_index=offset + si,
                        kind="dataword",
                        display=dws.display,
                    )
                )
            units.append(
                AugmentedUnit(
                    encounter_id=encounter.encounter_id,
                    doc_index=di,
                    text=augment_document(doc, mine, mode),
                    sentences=tuple(sentences),
                    gold=encounter.codes,
                )
            )
        return units

    chosen = _select_datawords(dws_all, mode)
    sentences = []
    if include_text:
        for di, doc in enumerate(encounter.documents):
            sentences.extend(split_sentences(doc, doc_index=di))
    virtual_doc = len(encounter.documents)
    for si, dws in enumerate(chosen):
        sentences.append(
            Sentence(
                text=dws.text,
                doc_index=virtual_doc,
                sent_index=si,
                kind="dataword",
                display=dws.display,
            )
        )
    joined = "\n".join(encounter.documents)
    return [
        AugmentedUnit(
            encounter_id=encounter.encounter_id,
            doc_index=None,
            text=augment_document(joined, dws_all, mode),
            sentences=tuple(sentences),
            gold=encounter.codes,
        )
    ]


# ---------------------------------------------------------------------------
# the bundle
# ---------------------------------------------------------------------------


@dataclass
class ModelBundle:
    """Self-contained model state: everything prediction needs."""

    tfidf: TfIdfModel
    variable_stats: dict[str, VariableStats]
    threshold_spec: ThresholdSpec
    ablation_mode: str
    unit: str
    label_models: tuple[LabelModel, ...]
    selected_variables: tuple[str, ...] | None = None
    extraction_source: str = "patterns"
    pattern_config: PatternConfig | None = None
    rollup_policy: RollupPolicy = field(default_factory=RollupPolicy)
    rollup_provenances: tuple[str, ...] | None = ("database",)
    lam: float = 1.0
    format_version: str = FORMAT_VERSION
    tokenizer: dict = field(default_factory=lambda: {"kind": "word", "lowercase": True})
    _weight_matrix: sparse.csc_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def labels(self) -> list[str]:
        return [lm.label for lm in self.label_models]

    def label_model(self, label: str) -> LabelModel:
        for lm in self.label_models:
            if lm.label == label:
                return lm
        raise KeyError(label)

    def weight_matrix(self) -> tuple[sparse.csc_matrix, np.ndarray, np.ndarray]:
        """(dim x n_labels) weight matrix plus bias and threshold arrays."""
        if self._weight_matrix is None:
            dim = self.tfidf.dimension
            cols = []
            for lm in self.label_models:
                cols.append(
                    sparse.csc_matrix(
                        (lm.values, (lm.indices, np.zeros(len(lm.indices), dtype=np.int64))),
                        shape=(dim, 1),
                    )
                )
            if cols:
                self._weight_matrix = sparse.hstack(cols, format="csc")
            else:
                self._weight_matrix = sparse.csc_matrix((dim, 0))
        biases = np.array([lm.bias for lm in self.label_models], dtype=np.float64)
        thresholds = np.array([lm.threshold for lm in self.label_models], dtype=np.float64)
        return self._weight_matrix, biases, thresholds


@dataclass
class CorpusUnits:
    """Units plus the training-derived state they were encoded with."""

    units: list[AugmentedUnit]
    stats: dict[str, VariableStats]
    selected: set[str] | None


def build_corpus_units(
    encounters: Sequence[Encounter], config: PipelineConfig
) -> CorpusUnits:
    """Collect records, filter, roll up, compute stats, encode, augment.

    This is the training-side half of the pipeline; everything it derives
    comes from the given encounters only.
    """
    encounters = list(encounters)
    if not encounters:
        raise ConfigError("cannot process an empty corpus")

    external = _key_external(config.external_records or ())
    raw_records = {
        e.encounter_id: _collect_records(
            e, config.extraction_source, config.pattern_config, external
        )
        for e in encounters
    }

    filt = config.measurement_filter
    if filt.mode == "all":
        selected = None
    else:
        counts = variable_counts(r for recs in raw_records.values() for r in recs)
        selected = allowed_variables(counts, filt)

    processed = {
        eid: _process_records(recs, selected, config.rollup_policy, config.rollup_provenances)
        for eid, recs in raw_records.items()
    }
    stats = compute_stats(r for recs in processed.values() for r in recs)

    units: list[AugmentedUnit] = []
    for enc in encounters:
        units.extend(
            _build_units(
                enc,
                processed[enc.encounter_id],
                config.threshold_spec,
                stats,
                config.ablation_mode,
                config.unit,
            )
        )
    return CorpusUnits(units=units, stats=stats, selected=selected)


def train_all(encounters: Sequence[Encounter], config: PipelineConfig) -> ModelBundle:
    """Run the full training pipeline and return a frozen bundle.

    Statistics, vocabulary, idf weights, measurement-selection sets, and
    thresholds are all computed from the given encounters only, so a
    cross-validation harness can call this per fold without leakage.
    """
    corpus_units = build_corpus_units(encounters, config)
    units = corpus_units.units
    stats = corpus_units.stats
    selected = corpus_units.selected

    texts = [u.text for u in units]
    if config.hash_bits is not None:
        tfidf = fit_hashed_idf(texts, config.hash_bits, config.l2_normalize)
    else:
        vocab = build_vocabulary(texts, min_df=config.min_df)
        tfidf = fit_idf(vocab, config.l2_normalize)

    X = stack_vectors((vectorize_document(tfidf, t) for t in texts), tfidf.dimension)

    label_counts = Counter(code for u in units for code in u.gold)
    labels = sorted(c for c, n in label_counts.items() if n >= config.min_positive)
    if not labels:
        raise ConfigError(
            "no usable labels: no code reaches the minimum positive count "
            f"({config.min_positive})"
        )

    gold_sets = [u.gold for u in units]

    def fit_one(label: str) -> LabelModel:
        y = np.fromiter((1.0 if label in g else 0.0 for g in gold_sets), dtype=np.float64)
        w, b = fit_label(X, y, config.lam)
        scores = X @ w + b
        thr = fit_threshold(scores, y)
        nz = np.nonzero(w)[0]
        return LabelModel(
            label=label,
            indices=nz.astype(np.int64),
            values=w[nz],
            bias=b,
            threshold=thr,
        )

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            models = tuple(pool.map(fit_one, labels))
    else:
        models = tuple(fit_one(label) for label in labels)

    return ModelBundle(
        tfidf=tfidf,
        variable_stats=stats,
        threshold_spec=config.threshold_spec,
        ablation_mode=config.ablation_mode,
        unit=config.unit,
        label_models=models,
        selected_variables=tuple(sorted(selected)) if selected is not None else None,
        extraction_source=config.extraction_source,
        pattern_config=config.pattern_config,
        rollup_policy=config.rollup_policy,
        rollup_provenances=config.rollup_provenances,
        lam=config.lam,
    )


def prepare_units(
    bundle: ModelBundle,
    encounter: Encounter,
    external_records: Sequence[StructuredRecord] | None = None,
) -> list[AugmentedUnit]:
    """Rebuild an encounter's units with the bundle's frozen state.

    This is the prediction-side half of the train/predict symmetry
    contract: an encounter encodes here exactly as it would have encoded
    as a member of the bundle's training set.
    """
    external = _key_external(external_records or ())
    records = _collect_records(
        encounter, bundle.extraction_source, bundle.pattern_config, external
    )
    selected = set(bundle.selected_variables) if bundle.selected_variables is not None else None
    records = _process_records(
        records, selected, bundle.rollup_policy, bundle.rollup_provenances
    )
    return _build_units(
        encounter,
        records,
        bundle.threshold_spec,
        bundle.variable_stats,
        bundle.ablation_mode,
        bundle.unit,
    )


def predict_units(bundle: ModelBundle, units: Sequence[AugmentedUnit]) -> list[PredictionSet]:
    """Score already-prepared units against every label in the bundle."""
    W, biases, thresholds = bundle.weight_matrix()
    out: list[PredictionSet] = []
    for unit in units:
        vec = vectorize_document(bundle.tfidf, unit.text)
        X = stack_vectors([vec], bundle.tfidf.dimension)
        scores = np.asarray((X @ W).todense()).ravel() + biases
        items = [
            PredictionItem(
                label=lm.label,
                score=float(scores[j]),
                predicted=bool(scores[j] >= thresholds[j]),
            )
            for j, lm in enumerate(bundle.label_models)
        ]
        items.sort(key=lambda it: (-it.score, it.label))
        out.append(
            PredictionSet(
                encounter_id=unit.encounter_id,
                doc_index=unit.doc_index,
                items=tuple(items),
            )
        )
    return out


def predict(
    bundle: ModelBundle,
    encounter: Encounter,
    external_records: Sequence[StructuredRecord] | None = None,
) -> list[PredictionSet]:
    """Score every label for each of the encounter's units.

    Unknown tokens are ignored and missing structured data is tolerated;
    a label with the +inf threshold sentinel is never predicted.
    """
    units = prepare_units(bundle, encounter, external_records)
    return predict_units(bundle, units)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _bundle_to_dict(bundle: ModelBundle) -> dict:
    tfidf = bundle.tfidf
    if tfidf.mode == "indexed":
        tokens = tfidf.vocabulary.tokens_by_index()
        tfidf_obj = {
            "mode": "indexed",
            "normalize": tfidf.l2_normalize,
            "document_count": tfidf.vocabulary.document_count,
            "tokens": [[t, tfidf.vocabulary.df[t]] for t in tokens],
            "idf": [float(v) for v in tfidf.idf],
        }
    else:
        tfidf_obj = {
            "mode": "hashed",
            "normalize": tfidf.l2_normalize,
            "document_count": tfidf.document_count,
            "bits": tfidf.hash_bits,
            "df": [[int(slot), int(c)] for slot, c in sorted(tfidf.hashed_df.items())],
        }
    return {
        "format_version": bundle.format_version,
        "tokenizer": bundle.tokenizer,
        "unit": bundle.unit,
        "ablation_mode": bundle.ablation_mode,
        "lambda": bundle.lam,
        "tfidf": tfidf_obj,
        "variable_stats": {
            name: [st.count, float(st.mean), float(st.std)]
            for name, st in sorted(bundle.variable_stats.items())
        },
        "threshold_spec": bundle.threshold_spec.to_dict(),
        "selected_variables": (
            list(bundle.selected_variables) if bundle.selected_variables is not None else None
        ),
        "extraction": {
            "source": bundle.extraction_source,
            "patterns": (
                bundle.pattern_config.to_dict() if bundle.pattern_config is not None else None
            ),
        },
        "rollup": {
            "aggregates": list(bundle.rollup_policy.aggregates),
            "provenances": (
                list(bundle.rollup_provenances)
                if bundle.rollup_provenances is not None
                else None
            ),
        },
        "labels": [
            {
                "code": lm.label,
                "bias": float(lm.bias),
                "threshold": None if math.isinf(lm.threshold) else float(lm.threshold),
                "weights": [[int(i), float(v)] for i, v in zip(lm.indices, lm.values)],
            }
            for lm in bundle.label_models
        ],
    }


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    """Serialize to a single JSON document with round-trip float precision."""
    payload = json.dumps(_bundle_to_dict(bundle), separators=(",", ":")) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload)


def load_bundle(path: str | Path) -> ModelBundle:
    """Load a saved bundle; predictions after a round trip are bit-exact."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"bundle {path}: parse error ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DataError(f"bundle {path}: expected a JSON object")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"bundle {path}: unsupported format_version {version!r} (supported: {FORMAT_VERSION!r})"
        )
    try:
        tf = obj["tfidf"]
        if tf["mode"] == "indexed":
            index = {t: i for i, (t, _df) in enumerate(tf["tokens"])}
            df = {t: int(d) for t, d in tf["tokens"]}
            vocab = Vocabulary(index=index, df=df, document_count=int(tf["document_count"]))
            tfidf = TfIdfModel(
                vocabulary=vocab,
                idf=np.asarray(tf["idf"], dtype=np.float64),
                l2_normalize=bool(tf["normalize"]),
                document_count=int(tf["document_count"]),
            )
        else:
            bits = int(tf["bits"])
            n = int(tf["document_count"])
            hashed_df = {int(slot): int(c) for slot, c in tf["df"]}
            idf = np.full(1 << bits, math.log(1.0 + n) + 1.0, dtype=np.float64)
            for slot, count in hashed_df.items():
                idf[slot] = math.log((1.0 + n) / (1.0 + count)) + 1.0
            tfidf = TfIdfModel(
                vocabulary=None,
                idf=idf,
                l2_normalize=bool(tf["normalize"]),
                hash_bits=bits,
                document_count=n,
                hashed_df=hashed_df,
            )
        stats = {
            name: VariableStats(name=name, count=int(c), mean=float(m), std=float(s))
            for name, (c, m, s) in obj["variable_stats"].items()
        }
        spec = ThresholdSpec.from_dict(obj["threshold_spec"])
        selected = obj["selected_variables"]
        extraction = obj["extraction"]
        pattern_config = (
            PatternConfig.from_dict(extraction["patterns"])
            if extraction.get("patterns") is not None
            else None
        )
        roll = obj["rollup"]
        models = []
        for entry in obj["labels"]:
            weights = entry["weights"]
            indices = np.asarray([i for i, _ in weights], dtype=np.int64)
            values = np.asarray([v for _, v in weights], dtype=np.float64)
            thr = entry["threshold"]
            models.append(
                LabelModel(
                    label=entry["code"],
                    indices=indices,
                    values=values,
                    bias=float(entry["bias"]),
                    threshold=math.inf if thr is None else float(thr),
                )
            )
        return ModelBundle(
            tfidf=tfidf,
            variable_stats=stats,
            threshold_spec=spec,
            ablation_mode=obj["ablation_mode"],
            unit=obj["unit"],
            label_models=tuple(models),
            selected_variables=tuple(selected) if selected is not None else None,
            extraction_source=extraction["source"],
            pattern_config=pattern_config,
            rollup_policy=RollupPolicy(aggregates=tuple(roll["aggregates"])),
            rollup_provenances=(
                tuple(roll["provenances"]) if roll["provenances"] is not None else None
            ),
            lam=float(obj["lambda"]),
            format_version=version,
            tokenizer=obj.get("tokenizer", {"kind": "word", "lowercase": True}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bundle {path}: malformed contents ({exc})") from exc
