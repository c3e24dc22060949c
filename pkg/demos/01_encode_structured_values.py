"""Turn structured values into DataWords sentences.

A numeric reading is binned against per-variable cuts and becomes a tiny
sentence whose tokens collapse similar values onto the same text. Run:

    python3 demos/01_encode_structured_values.py
"""

from datawords import StructuredRecord, ThresholdSpec, compute_stats, encode_record

# Clinician-specified cuts for temperature, plus a display name used in
# the natural rendering.
spec = ThresholdSpec(
    explicit={"Temp": (95.0, 97.7, 100.4, 103.0)},
    auto={},
    display_names={"Temp": "Temperature"},
)

print("=== clinician-specified cuts ===")
for value in (93.2, 96.5, 98.8, 102.1, 104.3):
    sentence = encode_record(StructuredRecord(name="Temp", value=value), spec, {})
    print(f"Temp = {value:>6}  ->  {sentence.text:55s} | {sentence.display}")

# Without explicit cuts, a pass over training data supplies the statistics
# and the default sigma multipliers (1.0 and 1.7) define the bins.
print("\n=== automatic cuts from training statistics ===")
training = [StructuredRecord(name="Glucose", value=v)
            for v in (82, 95, 101, 99, 104, 110, 93, 97, 105, 88)]
stats = compute_stats(training)
st = stats["Glucose"]
print(f"Glucose: mean={st.mean:.2f} sd={st.std:.2f} over {st.count} readings")

auto_spec = ThresholdSpec.defaults()
for value in (70.0, 90.0, 99.0, 108.0, 130.0):
    sentence = encode_record(StructuredRecord(name="Glucose", value=value), auto_spec, stats)
    print(f"Glucose = {value:>6}  ->  {sentence.text}")

# Categorical values need no statistics at all.
print("\n=== categorical values ===")
for name, value in [("Previous_condition", "lung cancer"),
                    ("lime_disease_test", "negative")]:
    rec = StructuredRecord(name=name, value=value, kind="condition")
    sentence = encode_record(rec, auto_spec, {})
    print(f"{name} = {value!r:15s} ->  {sentence.text:45s} | {sentence.display}")
