"""Measure the lift from DataWords on a corpus with planted signal.

Generates 400 synthetic documents where one label follows a temperature
rule, then runs seeded 4-fold cross-validation under each ablation mode.
Raw text carries only a diluted version of the signal (the digit tokens
also appear as filler), so adding DataWords sentences should raise F1
substantially. Run:

    python3 demos/04_cross_validation_uplift.py
"""

from datawords import PipelineConfig, PlantedRule, SynthSpec, generate_synthetic, run_cv

spec = SynthSpec(
    seed=42,
    documents=400,
    rules=(PlantedRule(label="L1", variable="Temp", bin="very_high",
                       strength=0.95, base_rate=0.3),),
)
encounters = generate_synthetic(spec)
positives = sum("L1" in e.codes for e in encounters)
print(f"{len(encounters)} documents, {positives} positive for L1\n")

print(f"{'mode':30s} {'P':>8s} {'R':>8s} {'F1':>8s}")
results = {}
for mode in ("text_only", "text_plus_datawords", "datawords_only",
             "nonnumeric_datawords_only"):
    if mode == "nonnumeric_datawords_only":
        # the planted corpus has no categorical records, so this mode has
        # nothing to model; skip it here (see the ablation tests instead)
        continue
    report = run_cv(encounters, PipelineConfig(ablation_mode=mode))
    p, r, f1 = report.micro
    results[mode] = f1
    print(f"{mode:30s} {p:8.4f} {r:8.4f} {f1:8.4f}")

uplift = results["text_plus_datawords"] - results["text_only"]
print(f"\nDataWords uplift over raw text: +{uplift:.4f} micro F1")
