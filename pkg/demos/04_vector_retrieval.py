"""The vector store: building, exact top-k retrieval, and persistence.

Embeds the toy corpus's graded training answers, queries it with an
unseen answer, and round-trips the store through its on-disk format.
"""

import tempfile
from pathlib import Path

from ragrade import HashEmbedder, parse_jsonl
from ragrade.vstore import RetrievalConfig, VectorStore, build_store, top_k

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "tiny.jsonl"
corpus = parse_jsonl(FIXTURE)
embedder = HashEmbedder(128)

store = build_store(
    list(corpus.split("train")), embedder, corpus.questions, include_question=True
)
print(f"store: {len(store)} entries, dim {store.dim}, embedder {store.embedder_id!r}")

query = corpus.split("ua")[0]
print(f"\nquery ({query.id}, gold={query.label.value}): {query.text!r}")

print("\ncorpus-wide top 3 (exact cosine, ties by entry index):")
for entry, score in top_k(store, query.text, embedder, RetrievalConfig(k=3)):
    print(f"  {score:+.4f}  [{entry.metadata['judgment']}] {entry.metadata['response_text']}")

print("\nsame-question-only top 3:")
config = RetrievalConfig(k=3, same_question_only=True)
for entry, score in top_k(store, query.text, embedder, config, question_id=query.question_id):
    print(f"  {score:+.4f}  [{entry.metadata['judgment']}] {entry.metadata['response_text']}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "train.vdb"
    store.save(path)
    loaded = VectorStore.load(path)
    again = top_k(loaded, query.text, embedder, RetrievalConfig(k=3))
    print(f"\nsaved {path.stat().st_size} bytes; reloaded scores identical:", end=" ")
    print([round(s, 4) for _, s in again])
