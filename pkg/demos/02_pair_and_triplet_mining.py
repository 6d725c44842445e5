"""Mining balanced pair and triplet sets from graded answers.

Walks one question's responses through pair enumeration, the strict and
general labeling rules, negative down-sampling, and triplet construction.
"""

from pathlib import Path

from ragrade import Scheme, parse_jsonl
from ragrade.pairs import (
    Scope,
    Strategy,
    balance,
    build_training_sets,
    build_triplets,
    enumerate_pairs,
    label_pairs,
)

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "tiny.jsonl"
corpus = parse_jsonl(FIXTURE)

responses = corpus.by_question("train")["q1"]
by_id = {r.id: r for r in corpus.split("train")}
print(f"question q1 has {len(responses)} graded answers")
for r in responses:
    print(f"  {r.id}: [{r.label.value}] {r.text}")

pairs = enumerate_pairs(responses)
print(f"\n{len(responses)} answers -> {len(pairs)} unordered pairs (n(n-1)/2)")

for strategy in (Strategy.GENERAL, Strategy.STRICT):
    labeled = label_pairs(pairs, by_id, Scheme.THREE_WAY, strategy)
    positives = [p for p in labeled if p.label == 1]
    print(f"{strategy.value:8s} labeling: {len(positives)} positive pairs of {len(labeled)}")
    for p in positives:
        print(f"    ({p.a_id}, {p.b_id})")

labeled = label_pairs(pairs, by_id, Scheme.THREE_WAY, Strategy.GENERAL)
balanced = balance(labeled, seed=7)
ones = sum(p.label for p in balanced)
print(f"\nbalanced set: {ones} positive + {len(balanced) - ones} sampled negative")

triplets = build_triplets(responses, Scheme.THREE_WAY, seed=7)
print(f"\ntriplets (anchor, positive, negative), round-robin with capped anchors:")
for t in triplets:
    print(f"  ({t.anchor_id}, {t.positive_id}, {t.negative_id})")

sets = build_training_sets(corpus, Scheme.THREE_WAY, Strategy.GENERAL, Scope.GLOBAL, seed=7)
print("\nwhole-corpus manifest:", sets.manifest())
