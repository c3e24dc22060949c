"""Fuse free text with structured data by encoding values as DataWords.

Structured records become short synthetic sentences (``dw__Temp__mid_range.``)
appended to a document's text, so ordinary text modeling handles both
channels at once and explanations can point at either a text sentence or
a structured value.
"""

from .corpus import Encounter, FoldSplit, Sentence, kfold_split, load_corpus, save_corpus, split_sentences, tokenize
from .encoding import (
    ABLATION_MODES,
    DataWordSentence,
    ThresholdSpec,
    VariableStats,
    augment_document,
    bin_value,
    compute_stats,
    encode_record,
    encode_records,
    render_natural,
)
from .errors import ConfigError, DataError, DataWordsError, InputError, UnsupportedVersionError
from .evaluation import (
    MetricsReport,
    PlantedRule,
    SynthSpec,
    confusion_counts,
    generate_synthetic,
    micro_metrics,
    per_document_metrics,
    run_cv,
)
from .explain import Justification, score_sentences, top_justifications
from .extraction import (
    MeasurementFilter,
    PatternConfig,
    RollupPolicy,
    StructuredRecord,
    default_pattern_config,
    extract_patterns,
    load_db_measurements,
    load_external_extractions,
    rollup,
    select_measurements,
)
from .model import (
    AugmentedUnit,
    LabelModel,
    ModelBundle,
    PipelineConfig,
    PredictionSet,
    combine_linear,
    fit_label,
    fit_threshold,
    load_bundle,
    predict,
    prepare_units,
    save_bundle,
    train_all,
)
from .vectorize import (
    DocumentVector,
    TfIdfModel,
    Vocabulary,
    build_vocabulary,
    fit_idf,
    vectorize_document,
    vectorize_sentence,
)

__version__ = "0.1.0"
