"""Pair and triplet training sets mined from a corpus.

Pairs are unordered, never cross question boundaries, and carry a binary
same-category label under a strict or general rule.  Triplets assign each
response the anchor role in turn with round-robin positive/negative
cycling.  Balanced sets keep every positive pair and down-sample the
negatives to match.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Response, Scheme, collapse_label


class Strategy(enum.Enum):
    """Pair labeling rule.

    STRICT: 1 only when both answers are correct or both incorrect;
    same-category pairs of any other category get 0.
    GENERAL: 1 whenever both answers share a collapsed category.
    """

    STRICT = "strict"
    GENERAL = "general"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        return cls(text.lower().strip())


class Scope(enum.Enum):
    """Per-question training sets vs. a single merged set."""

    QUESTION = "question"
    GLOBAL = "global"

    @classmethod
    def parse(cls, text: str) -> "Scope":
        key = text.lower().strip()
        if key in ("question", "question-specific", "question_specific"):
            return cls.QUESTION
        if key == "global":
            return cls.GLOBAL
        raise ValueError(f"unknown scope {text!r}")


@dataclass(frozen=True)
class Pair:
    """Unordered response pair; a_id < b_id canonically."""

    a_id: str
    b_id: str
    question_id: str
    label: int | None = None

    def __post_init__(self):
        if self.a_id == self.b_id:
            raise ValueError(f"pair of a response with itself: {self.a_id!r}")
        if self.a_id > self.b_id:
            a, b = self.a_id, self.b_id
            object.__setattr__(self, "a_id", b)
            object.__setattr__(self, "b_id", a)


@dataclass(frozen=True)
class Triplet:
    anchor_id: str
    positive_id: str
    negative_id: str
    question_id: str

    def __post_init__(self):
        ids = (self.anchor_id, self.positive_id, self.negative_id)
        if len(set(ids)) != 3:
            raise ValueError(f"triplet ids must be distinct: {ids}")


def derive_seed(base_seed: int, *parts: str) -> int:
    """Stable per-key seed so parallel per-question work stays reproducible."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(base_seed).encode())
    for part in parts:
        h.update(b"\x00" + part.encode())
    return int.from_bytes(h.digest(), "little")


def enumerate_pairs(responses: list[Response]) -> list[Pair]:
    """All unordered, unique pairs of responses to one question: n(n-1)/2."""
    qids = {r.question_id for r in responses}
    if len(qids) > 1:
        raise ValueError(f"responses span multiple questions: {sorted(qids)}")
    pairs = []
    for i in range(len(responses)):
        for j in range(i + 1, len(responses)):
            pairs.append(
                Pair(
                    a_id=responses[i].id,
                    b_id=responses[j].id,
                    question_id=responses[i].question_id,
                )
            )
    return pairs


def pair_label(a: Response, b: Response, scheme: Scheme, strategy: Strategy) -> int:
    """Binary label of a pair under the scheme's collapsed categories.

    Under 5-way there is no "incorrect" category, so strict labeling
    privileges only "correct" there.
    """
    ca = collapse_label(a.label, scheme)
    cb = collapse_label(b.label, scheme)
    if ca != cb:
        return 0
    if strategy is Strategy.GENERAL:
        return 1
    return 1 if ca in ("correct", "incorrect") else 0


def label_pairs(
    pairs: list[Pair],
    by_id: dict[str, Response],
    scheme: Scheme,
    strategy: Strategy,
) -> list[Pair]:
    return [
        Pair(
            a_id=p.a_id,
            b_id=p.b_id,
            question_id=p.question_id,
            label=pair_label(by_id[p.a_id], by_id[p.b_id], scheme, strategy),
        )
        for p in pairs
    ]


def balance(pairs: list[Pair], seed: int) -> list[Pair]:
    """Keep all 1-labeled pairs; down-sample 0-labeled pairs to match.

    Sampling is uniform without replacement and deterministic under the
    seed.  If there are fewer negatives than positives, all negatives are
    kept and the set stays imbalanced.  Input order is preserved.
    """
    positives = [i for i, p in enumerate(pairs) if p.label == 1]
    negatives = [i for i, p in enumerate(pairs) if p.label == 0]
    rng = np.random.default_rng(seed)
    n_keep = min(len(positives), len(negatives))
    kept_neg = set(rng.choice(len(negatives), size=n_keep, replace=False).tolist())
    keep = set(positives) | {negatives[i] for i in kept_neg}
    return [p for i, p in enumerate(pairs) if i in keep]


DEFAULT_TRIPLET_CAP = None  # per-anchor cap; None derives max(1, peers // 2)


def build_triplets(
    responses: list[Response],
    scheme: Scheme,
    seed: int,
    per_anchor_cap: int | None = DEFAULT_TRIPLET_CAP,
) -> list[Triplet]:
    """Round-robin triplets over responses to a single question.

    Each response anchors in turn; same-category peers and other-category
    responses are shuffled once per anchor and cycled.  Anchors without a
    peer or without a negative are skipped.  The per-anchor count is
    capped at max(1, peers // 2) unless overridden, which also guarantees
    no duplicate triplets.
    """
    qids = {r.question_id for r in responses}
    if len(qids) > 1:
        raise ValueError(f"responses span multiple questions: {sorted(qids)}")
    rng = np.random.default_rng(seed)
    categories = {r.id: collapse_label(r.label, scheme) for r in responses}
    triplets = []
    for anchor in responses:
        peers = [r for r in responses if r.id != anchor.id and categories[r.id] == categories[anchor.id]]
        others = [r for r in responses if categories[r.id] != categories[anchor.id]]
        if not peers or not others:
            continue
        peers = [peers[i] for i in rng.permutation(len(peers))]
        others = [others[i] for i in rng.permutation(len(others))]
        cap = per_anchor_cap if per_anchor_cap is not None else max(1, len(peers) // 2)
        count = min(cap, len(peers) * len(others))
        for i in range(count):
            triplets.append(
                Triplet(
                    anchor_id=anchor.id,
                    positive_id=peers[i % len(peers)].id,
                    negative_id=others[i % len(others)].id,
                    question_id=anchor.question_id,
                )
            )
    return triplets


@dataclass
class TrainingSets:
    """Balanced pair sets and triplet sets, per question or merged."""

    scheme: Scheme
    strategy: Strategy
    scope: Scope
    seed: int
    pair_sets: dict[str, list[Pair]]
    triplet_sets: dict[str, list[Triplet]]

    def merged_pairs(self) -> list[Pair]:
        """Concatenation of per-question balanced sets, in sorted question order."""
        return [p for qid in sorted(self.pair_sets) for p in self.pair_sets[qid]]

    def merged_triplets(self) -> list[Triplet]:
        return [t for qid in sorted(self.triplet_sets) for t in self.triplet_sets[qid]]

    def manifest(self) -> dict:
        imbalanced = [
            qid
            for qid, pairs in self.pair_sets.items()
            if sum(p.label for p in pairs) != sum(1 - p.label for p in pairs)
        ]
        return {
            "scheme": self.scheme.value,
            "strategy": self.strategy.value,
            "scope": self.scope.value,
            "seed": self.seed,
            "questions": len(self.pair_sets),
            "pairs": sum(len(v) for v in self.pair_sets.values()),
            "pairs_positive": sum(
                1 for v in self.pair_sets.values() for p in v if p.label == 1
            ),
            # questions whose negatives ran out before matching the positives
            "imbalanced_questions": sorted(imbalanced),
            "triplets": sum(len(v) for v in self.triplet_sets.values()),
        }


def build_training_sets(
    corpus: Corpus,
    scheme: Scheme,
    strategy: Strategy,
    scope: Scope,
    seed: int,
    split: str = "train",
    per_anchor_cap: int | None = DEFAULT_TRIPLET_CAP,
) -> TrainingSets:
    """Mine, label, and balance pair sets (and triplet sets) per question.

    Balancing happens before any merging, so the global set is exactly
    the union of the per-question balanced sets.  Per-question seeds are
    derived from the base seed and the question id.
    """
    by_id = {r.id: r for r in corpus.split(split)}
    pair_sets: dict[str, list[Pair]] = {}
    triplet_sets: dict[str, list[Triplet]] = {}
    for qid, responses in corpus.by_question(split).items():
        qseed = derive_seed(seed, qid)
        labeled = label_pairs(enumerate_pairs(responses), by_id, scheme, strategy)
        pair_sets[qid] = balance(labeled, qseed)
        triplet_sets[qid] = build_triplets(
            responses, scheme, derive_seed(seed, qid, "triplets"), per_anchor_cap
        )
    return TrainingSets(
        scheme=scheme,
        strategy=strategy,
        scope=scope,
        seed=seed,
        pair_sets=pair_sets,
        triplet_sets=triplet_sets,
    )


def write_pairs_jsonl(pairs: list[Pair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"a": p.a_id, "b": p.b_id, "label": p.label, "qid": p.question_id}
                )
                + "\n"
            )


def read_pairs_jsonl(path: str | Path) -> list[Pair]:
    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pairs.append(
                    Pair(
                        a_id=obj["a"],
                        b_id=obj["b"],
                        question_id=obj["qid"],
                        label=obj["label"],
                    )
                )
    return pairs


def write_triplets_jsonl(triplets: list[Triplet], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {
                        "anchor": t.anchor_id,
                        "pos": t.positive_id,
                        "neg": t.negative_id,
                        "qid": t.question_id,
                    }
                )
                + "\n"
            )


def read_triplets_jsonl(path: str | Path) -> list[Triplet]:
    triplets = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                triplets.append(
                    Triplet(
                        anchor_id=obj["anchor"],
                        positive_id=obj["pos"],
                        negative_id=obj["neg"],
                        question_id=obj["qid"],
                    )
                )
    return triplets
