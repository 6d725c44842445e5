"""Restoring retrieval on shifted test splits by donating a test fraction.

Unseen-question answers have no same-question neighbors in the store, so
they normally grade without examples.  Moving a seeded fraction of the
test split into the store (judgments included, no retraining) brings
back in-context examples; this sweeps the fraction and reports metrics.
"""

import numpy as np

from ragrade import Corpus, ExperimentConfig, Label, Question, Response, Scheme
from ragrade.harness import format_report_table, rag_fraction_experiment, run_scenario

rng = np.random.default_rng(42)
PHRASES = {
    Label.CORRECT: "gravity pulls every mass toward the earth",
    Label.CONTRADICTORY: "gravity pushes masses away from the earth",
    Label.IRRELEVANT: "the moon looks pretty at night",
}

rows = [Response("t0", "qt", "momentum is conserved in collisions", Label.CORRECT)]
uq = []
for i in range(60):
    label = list(PHRASES)[int(rng.integers(3))]
    # heavy shared-word noise keeps low donation fractions from saturating
    extra = " ".join(f"w{int(rng.integers(30))}" for _ in range(14))
    uq.append(Response(f"s{i:02d}", "qs", f"{PHRASES[label]} {extra}", label))

corpus = Corpus(
    name="shifted",
    questions={
        "qt": Question(id="qt", text="Collisions?", reference_answers=("momentum",)),
        "qs": Question(id="qs", text="What does gravity do?", reference_answers=("it pulls",)),
    },
    splits={"train": tuple(rows), "uq": tuple(uq)},
)

config = ExperimentConfig(scheme=Scheme.THREE_WAY, seeds=(1, 2, 3), k=3, embed_dim=96)

baseline = run_scenario(corpus, "uq", config)
print("without examples (the mock grader has nothing to echo):")
print(format_report_table([baseline]))

print("\nfraction sweep (averaged over 3 seeded runs):")
print(f"{'fraction':>8} {'moved':>6} {'Acc':>7} {'M-F1':>7} {'W-F1':>7}")
for fraction in (0.2, 0.3, 0.4, 0.5):
    report = rag_fraction_experiment(corpus, "uq", fraction, config)
    m = report.metrics
    moved = report.per_run[0]["moved_to_store"]
    print(
        f"{fraction:>8.1f} {moved:>6d} {100 * m['acc']:>7.2f} "
        f"{100 * m['m_f1']:>7.2f} {100 * m['w_f1']:>7.2f}"
    )
print("\nthe adapter is never retrained on the moved fraction; it only feeds retrieval")
