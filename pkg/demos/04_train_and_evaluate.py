"""Small end-to-end run on the toy world: synthesize, corrupt, train, rescore.

Uses a reduced configuration so it finishes in well under a minute; the
command ``deal experiment -o out/`` runs the full-size version.

Run: python3 demos/04_train_and_evaluate.py
"""

from deal.experiment import ExperimentConfig, report_rows, run_experiment
from deal.synth import format_report
from deal.toydata import general_templates, toy_confusions, toy_kg, toy_templates
from deal.trainer import TrainerConfig

graph = toy_kg()
config = ExperimentConfig(train_synth=300, test_size=100, variants=("deal", "deal-r"),
                          trainer=TrainerConfig(epochs=3))
result = run_experiment(graph, toy_templates(), general_templates(), toy_confusions(), config)
print(f"finished in {result.seconds:.1f}s\n")
for variant in config.variants:
    print(f"== {variant} ({len(result.models[variant].features)} features)")
    print(format_report(report_rows(result, graph, variant)))

best = max(result.models["deal-r"].features, key=lambda f: f.weight)
print("highest-weighted deal-r feature:", best.text, round(best.weight, 3))
