"""Train on a toy corpus, predict, and justify each prediction.

The pipeline extracts measurements from the text, appends their DataWords
sentences, trains one ridge model per label, and then scores every
sentence of a document to explain each predicted label. Run:

    python3 demos/02_train_predict_explain.py
"""

from datawords import Encounter, PipelineConfig, ThresholdSpec, predict, train_all
from datawords.explain import score_sentences, top_justifications
from datawords.model import prepare_units, predict_units

corpus = [
    Encounter(
        encounter_id="e1",
        documents=("Patient febrile overnight. Temp = 104.3 recorded.",),
        codes=frozenset({"FEVER"}),
    ),
    Encounter(
        encounter_id="e2",
        documents=("Looks unwell this morning. Temp = 105.1 noted.",),
        codes=frozenset({"FEVER"}),
    ),
    Encounter(
        encounter_id="e3",
        documents=("Temp = 98.6 and feeling fine.",),
        codes=frozenset(),
    ),
    Encounter(
        encounter_id="e4",
        documents=("Routine followup, no complaints.",),
        codes=frozenset(),
    ),
]

config = PipelineConfig(
    threshold_spec=ThresholdSpec(
        explicit={"Temp": (95.0, 97.7, 100.4, 103.0)},
        auto={},
        display_names={"Temp": "Temperature"},
    )
)

bundle = train_all(corpus, config)
print(f"trained labels: {bundle.labels}  (features: {bundle.tfidf.dimension})")

probe = Encounter(
    encounter_id="new-visit",
    documents=("Spiking fevers again tonight. Temp = 104.9 at bedside.",),
)

print("\n=== predictions ===")
for pset in predict(bundle, probe):
    for item in pset.items:
        flag = "PREDICT" if item.predicted else "       "
        print(f"{flag}  {item.label:8s} score={item.score:+.4f}")

print("\n=== justifications for FEVER ===")
units = prepare_units(bundle, probe)
for unit, pset in zip(units, predict_units(bundle, units)):
    if "FEVER" not in pset.predicted_labels():
        continue
    scored = score_sentences(bundle, "FEVER", unit)
    for j in top_justifications(scored, k=3):
        print(f"  #{j.rank} [{j.sentence.kind:8s}] score={j.score:+.4f}  {j.rendering}")
