"""Key-sentence justifications for a (document, label) pair.

Every sentence of the augmented document, ordinary text and DataWords
alike, is scored with the label's weight vector; the top scorers are the
justification. The bias is excluded: it shifts all sentences equally and
would only obscure the ranking. DataWords sentences are reported with
their natural rendering so a reviewer sees "Temperature was very high
[104.3]" rather than the raw token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Sentence, split_sentences, tokenize
from .model import AugmentedUnit, ModelBundle
from .vectorize import vectorize_sentence

_DW_TOKEN_RE = re.compile(r"^dw__.+__.+$")

JUSTIFICATION_FILTERS = ("all", "text_only", "datawords_only")


@dataclass(frozen=True)
class Justification:
    """One ranked supporting sentence for a prediction."""

    sentence: Sentence
    score: float
    rank: int
    rendering: str


def looks_like_dataword_sentence(text: str) -> bool:
    toks = tokenize(text)
    return bool(toks) and all(_DW_TOKEN_RE.match(t) for t in toks)


def sentences_from_text(augmented_doc: str, doc_index: int = 0) -> list[Sentence]:
    """Split raw augmented text, classifying DataWords sentences by shape.

    Used when only the augmented string is available; pipeline callers
    pass AugmentedUnit objects instead, which keep exact renderings.
    """
    out = []
    for s in split_sentences(augmented_doc, doc_index=doc_index):
        if looks_like_dataword_sentence(s.text):
            out.append(
                Sentence(
                    text=s.text,
                    doc_index=s.doc_index,
                    sent_index=s.sent_index,
                    kind="dataword",
                    display=None,
                )
            )
        else:
            out.append(s)
    return out


def score_sentences(
    bundle: ModelBundle,
    label: str,
    augmented_doc: "AugmentedUnit | str",
) -> list[tuple[Sentence, float]]:
    """Score each sentence with the label's weights (bias excluded).

    All sentences are returned, including zero-score out-of-vocabulary
    ones, in document order. Raises KeyError for a label the bundle does
    not know.
    """
    lm = bundle.label_model(label)
    if isinstance(augmented_doc, str):
        sentences: Sequence[Sentence] = sentences_from_text(augmented_doc)
    else:
        sentences = augmented_doc.sentences
    weights = lm.dense_weights(bundle.tfidf.dimension)
    scored = []
    for sent in sentences:
        vec = vectorize_sentence(bundle.tfidf, sent)
        scored.append((sent, vec.dot(weights)))
    return scored


def top_justifications(
    scored: Sequence[tuple[Sentence, float]],
    k: int = 3,
    sentence_filter: str = "all",
) -> list[Justification]:
    """Best k sentences after filtering by kind.

    Sorting is total: score descending, then (doc_index, sent_index)
    ascending, so shuffling the input never changes the output. Fewer than
    k survivors simply yield a shorter list.
    """
    if sentence_filter not in JUSTIFICATION_FILTERS:
        raise ValueError(f"unknown justification filter: {sentence_filter!r}")
    if sentence_filter == "text_only":
        pool = [(s, sc) for s, sc in scored if s.kind == "text"]
    elif sentence_filter == "datawords_only":
        pool = [(s, sc) for s, sc in scored if s.kind == "dataword"]
    else:
        pool = list(scored)
    pool.sort(key=lambda pair: (-pair[1], pair[0].doc_index, pair[0].sent_index))
    out = []
    for rank, (sent, score) in enumerate(pool[:k], start=1):
        rendering = sent.display if sent.display is not None else sent.text
        out.append(Justification(sentence=sent, score=float(score), rank=rank, rendering=rendering))
    return out
