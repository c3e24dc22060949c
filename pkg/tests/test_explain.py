import random

import numpy as np
import pytest

from datawords.corpus import Encounter, Sentence
from datawords.encoding import ThresholdSpec
from datawords.explain import (
    Justification,
    score_sentences,
    sentences_from_text,
    top_justifications,
)
from datawords.model import (
    LabelModel,
    ModelBundle,
    PipelineConfig,
    predict,
    prepare_units,
    train_all,
)
from datawords.vectorize import build_vocabulary, fit_idf, vectorize_sentence


def one_hot_bundle(train_docs, hot_token, label="L1", normalize=True):
    """Bundle with a single unit weight on one token."""
    vocab = build_vocabulary(train_docs)
    tfidf = fit_idf(vocab, l2_normalize=normalize)
    ix = vocab.index[hot_token]
    lm = LabelModel(
        label=label,
        indices=np.array([ix], dtype=np.int64),
        values=np.array([1.0]),
        bias=0.25,
        threshold=0.1,
    )
    return ModelBundle(
        tfidf=tfidf,
        variable_stats={},
        threshold_spec=ThresholdSpec.defaults(),
        ablation_mode="text_plus_datawords",
        unit="document",
        label_models=(lm,),
        extraction_source="none",
    )


DOC = "fever noted today. patient resting.\ndw__Temp__very_high_range."


class TestScoreSentences:
    def test_one_hot_dataword_wins(self):
        bundle = one_hot_bundle([DOC], "dw__temp__very_high_range")
        scored = score_sentences(bundle, "L1", DOC)
        assert len(scored) == 3
        best = max(scored, key=lambda p: p[1])
        assert best[0].text == "dw__Temp__very_high_range."
        assert best[0].kind == "dataword"
        others = [sc for s, sc in scored if s.text != best[0].text]
        assert all(sc < best[1] for sc in others)

    def test_all_oov_scores_zero(self):
        bundle = one_hot_bundle([DOC], "fever")
        scored = score_sentences(bundle, "L1", "unrelated words entirely. nothing here.")
        assert [sc for _, sc in scored] == [0.0, 0.0]

    def test_bias_excluded(self):
        bundle = one_hot_bundle([DOC], "fever")
        scored = score_sentences(bundle, "L1", "zzz.")
        assert scored[0][1] == 0.0  # bias 0.25 must not leak in

    def test_unknown_label_raises(self):
        bundle = one_hot_bundle([DOC], "fever")
        with pytest.raises(KeyError):
            score_sentences(bundle, "NOPE", DOC)

    def test_matches_dense_dot_oracle(self):
        rng = np.random.default_rng(13)
        docs = ["alpha beta gamma. delta epsilon.", "beta zeta. eta theta iota."]
        vocab = build_vocabulary(docs)
        tfidf = fit_idf(vocab)
        w = rng.normal(size=len(vocab))
        lm = LabelModel(
            label="L1",
            indices=np.arange(len(vocab), dtype=np.int64),
            values=w,
            bias=0.0,
            threshold=0.0,
        )
        bundle = ModelBundle(
            tfidf=tfidf, variable_stats={}, threshold_spec=ThresholdSpec.defaults(),
            ablation_mode="text_plus_datawords", unit="document",
            label_models=(lm,), extraction_source="none",
        )
        scored = score_sentences(bundle, "L1", docs[0])
        for sent, score in scored:
            dense = vectorize_sentence(tfidf, sent).to_dense()
            assert abs(score - float(dense @ w)) <= 1e-12

    def test_accepts_prepared_units(self):
        encs = [
            Encounter(encounter_id="e1", documents=("fever today.",), codes=frozenset({"A"})),
            Encounter(encounter_id="e2", documents=("all clear.",), codes=frozenset()),
        ]
        bundle = train_all(encs, PipelineConfig(ablation_mode="text_only",
                                                extraction_source="none"))
        unit = prepare_units(bundle, encs[0])[0]
        scored = score_sentences(bundle, "A", unit)
        assert [s.text for s, _ in scored] == ["fever today."]


class TestTopJustifications:
    def scored(self):
        s1 = Sentence(text="fever noted.", doc_index=0, sent_index=0)
        s2 = Sentence(text="dw__Temp__very_high_range.", doc_index=0, sent_index=2,
                      kind="dataword", display="Temperature was very high [104.3]")
        s3 = Sentence(text="patient resting.", doc_index=0, sent_index=1)
        return [(s1, 0.4), (s2, 0.9), (s3, 0.1)]

    def test_filter_datawords_only(self):
        out = top_justifications(self.scored(), k=1, sentence_filter="datawords_only")
        assert len(out) == 1
        assert out[0].sentence.kind == "dataword"
        assert out[0].rendering == "Temperature was very high [104.3]"

    def test_filter_text_only(self):
        out = top_justifications(self.scored(), k=5, sentence_filter="text_only")
        assert all(j.sentence.kind == "text" for j in out)
        assert [j.rank for j in out] == [1, 2]

    def test_k_larger_than_pool(self):
        out = top_justifications(self.scored(), k=10)
        assert len(out) == 3
        assert [j.rank for j in out] == [1, 2, 3]
        scores = [j.score for j in out]
        assert scores == sorted(scores, reverse=True)

    def test_tie_breaks_by_position(self):
        s_a = Sentence(text="a.", doc_index=0, sent_index=1)
        s_b = Sentence(text="b.", doc_index=0, sent_index=0)
        out = top_justifications([(s_a, 0.5), (s_b, 0.5)], k=2)
        assert [j.sentence.text for j in out] == ["b.", "a."]

    def test_permutation_invariance(self):
        scored = self.scored()
        base = top_justifications(scored, k=3)
        for seed in range(5):
            shuffled = scored[:]
            random.Random(seed).shuffle(shuffled)
            assert top_justifications(shuffled, k=3) == base

    def test_rendering_defaults_to_text(self):
        out = top_justifications(self.scored(), k=1, sentence_filter="text_only")
        assert out[0].rendering == out[0].sentence.text

    def test_unknown_filter(self):
        with pytest.raises(ValueError):
            top_justifications(self.scored(), k=1, sentence_filter="everything")


class TestSumConsistency:
    def test_sentence_scores_sum_to_document_score(self):
        # sentences use disjoint token types, so with normalization off the
        # document vector is the sum of its sentence vectors
        doc = "alpha beta. gamma delta epsilon. zeta."
        rng = np.random.default_rng(17)
        bundle = one_hot_bundle([doc], "alpha", normalize=False)
        vocab = bundle.tfidf.vocabulary
        w = rng.normal(size=len(vocab))
        lm = LabelModel(label="L1", indices=np.arange(len(vocab), dtype=np.int64),
                        values=w, bias=0.0, threshold=0.0)
        bundle.label_models = (lm,)
        scored = score_sentences(bundle, "L1", doc)
        from datawords.vectorize import vectorize_document

        doc_score = float(vectorize_document(bundle.tfidf, doc).to_dense() @ w)
        assert sum(sc for _, sc in scored) == pytest.approx(doc_score, abs=1e-9)


class TestSentencesFromText:
    def test_shape_classification(self):
        sents = sentences_from_text("plain words here.\ndw__X__mid_range.")
        assert [s.kind for s in sents] == ["text", "dataword"]

    def test_mixed_sentence_is_text(self):
        sents = sentences_from_text("value dw__X__mid_range inline.")
        assert sents[0].kind == "text"


class TestDataWordsAreFirstClass:
    def test_dataword_can_hold_rank_one_with_filter_all(self):
        bundle = one_hot_bundle([DOC], "dw__temp__very_high_range")
        scored = score_sentences(bundle, "L1", DOC)
        out = top_justifications(scored, k=1, sentence_filter="all")
        assert out[0].sentence.kind == "dataword"

    def test_justifications_on_trained_pipeline(self):
        # two positives share only the fever DataWords tokens, so the
        # model concentrates weight there and the encoded sentence should
        # top the justification list
        encs = [
            Encounter(
                encounter_id="e1",
                documents=("Patient febrile overnight. Temp = 104.3 recorded.",),
                codes=frozenset({"A01"}),
            ),
            Encounter(
                encounter_id="e2",
                documents=("Looks unwell this morning. Temp = 105.1 noted.",),
                codes=frozenset({"A01"}),
            ),
            Encounter(encounter_id="e3", documents=("Temp = 98.6 fine.",), codes=frozenset()),
            Encounter(encounter_id="e4", documents=("another routine note.",), codes=frozenset()),
        ]
        spec = ThresholdSpec(explicit={"Temp": (95.0, 97.7, 100.4, 103.0)}, auto={})
        cfg = PipelineConfig(threshold_spec=spec)
        bundle = train_all(encs, cfg)
        unit = prepare_units(bundle, encs[0])[0]
        pset = predict(bundle, encs[0])[0]
        assert "A01" in pset.predicted_labels()
        scored = score_sentences(bundle, "A01", unit)
        out = top_justifications(scored, k=1)
        assert isinstance(out[0], Justification)
        assert out[0].sentence.kind == "dataword"
        assert out[0].sentence.text.startswith("dw__Temp__")
