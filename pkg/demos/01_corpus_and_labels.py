"""Corpora, judgment labels, and collapse schemes.

Loads the bundled toy corpus, shows how the five-way judgments map onto
the three-way and two-way schemes, and runs the validator.
"""

from pathlib import Path

from ragrade import Label, Scheme, collapse_label, parse_jsonl, validate_corpus

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "tiny.jsonl"

corpus = parse_jsonl(FIXTURE)
print(f"corpus {corpus.name!r}: {len(corpus.questions)} questions")
for split in ("train", "ua", "uq", "ud"):
    print(f"  {split:5s} {len(corpus.split(split)):3d} responses")

print("\nfive-way labels collapse like this:")
print(f"{'label':>34} | {'3-way':>13} | 2-way")
for label in Label:
    three = collapse_label(label, Scheme.THREE_WAY)
    two = collapse_label(label, Scheme.TWO_WAY)
    print(f"{label.value:>34} | {three:>13} | {two}")

# judgment strings are normalized, so dataset spelling variants all parse
for variant in ("NON_DOMAIN", "non domain", "partially_correct_incomplete"):
    print(f"\n{variant!r} parses as {Label.parse(variant).value!r}", end="")

report = validate_corpus(corpus)
print(f"\n\nvalidation: {'ok' if report.ok else report.violations}")
print("train label counts:", report.counts["train"])
