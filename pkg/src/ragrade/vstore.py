"""Vector store of embedded graded responses with exact cosine top-k.

Entries are unit vectors (rows of one matrix) plus JSON metadata holding
the original response text and its judgment.  Retrieval is an exact
matrix product over the candidate rows: no approximation, descending
score, ties broken by ascending entry index.  Vectors are held in
float32, which makes save/load byte-stable; scoring runs in float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Question, Response
from .embedding import BaseEmbedder

STORE_VERSION = 1
REQUIRED_METADATA = ("response_text", "judgment")


class StoreError(Exception):
    pass


@dataclass(frozen=True)
class Entry:
    vector: np.ndarray  # unit norm, float32
    metadata: dict

    def __post_init__(self):
        for key in REQUIRED_METADATA:
            if key not in self.metadata:
                raise StoreError(f"entry metadata missing required key {key!r}")
        vec = np.asarray(self.vector, dtype=np.float32)
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > 1e-6:
            raise StoreError(f"entry vector norm {norm} is not unit")
        object.__setattr__(self, "vector", vec)


@dataclass
class VectorStore:
    dim: int
    embedder_id: str
    entries: list[Entry] = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            if e.vector.shape != (self.dim,):
                raise StoreError(
                    f"entry vector shape {e.vector.shape} != store dim {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray:
        """Entry vectors stacked as rows (float32); empty store gives (0, dim)."""
        if not self.entries:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([e.vector for e in self.entries])

    def extended(self, extra: list[Entry]) -> "VectorStore":
        """New store with extra entries appended; self is unchanged."""
        return VectorStore(
            dim=self.dim, embedder_id=self.embedder_id, entries=self.entries + list(extra)
        )

    def save(self, path: str | Path) -> None:
        """Header JSON line, one metadata JSON line per entry, float32 payload."""
        header = {
            "version": STORE_VERSION,
            "dim": self.dim,
            "count": len(self.entries),
            "embedder_id": self.embedder_id,
        }
        with Path(path).open("wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            for e in self.entries:
                fh.write(
                    json.dumps(e.metadata, sort_keys=True, ensure_ascii=False).encode("utf-8")
                    + b"\n"
                )
            if self.entries:
                fh.write(np.ascontiguousarray(self.matrix(), dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        path = Path(path)
        with path.open("rb") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise StoreError(f"{path}: not a vector store file") from None
            if header.get("version") != STORE_VERSION:
                raise StoreError(
                    f"{path}: unsupported store version {header.get('version')!r}"
                )
            dim, count = header["dim"], header["count"]
            metadata = [json.loads(fh.readline().decode("utf-8")) for _ in range(count)]
            payload = fh.read()
        expected = count * dim * 4
        if len(payload) != expected:
            raise StoreError(
                f"{path}: vector payload length mismatch, expected {expected} bytes, "
                f"got {len(payload)}"
            )
        vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
        entries = [Entry(vector=vectors[i], metadata=metadata[i]) for i in range(count)]
        return cls(dim=dim, embedder_id=header["embedder_id"], entries=entries)


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    same_question_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


def build_store(
    responses: list[Response],
    embedder: BaseEmbedder,
    questions: dict[str, Question] | None = None,
    include_question: bool = False,
    include_reference: bool = False,
) -> VectorStore:
    """Embed graded responses into a store, one entry per response.

    Metadata always carries the response text, its judgment (canonical
    five-way string), and the response/question ids; question text and
    reference answer are included on request, which needs the question
    map.
    """
    if (include_question or include_reference) and questions is None:
        raise StoreError("question metadata requested but no question map given")
    entries = []
    for r in responses:
        try:
            vec = embedder.embed_scoped(r.text, r.question_id)
        except Exception as exc:
            raise StoreError(f"embedding failed for response {r.id!r}: {exc}") from exc
        metadata = {
            "response_text": r.text,
            "judgment": r.label.value,
            "response_id": r.id,
            "question_id": r.question_id,
        }
        if include_question:
            metadata["question"] = questions[r.question_id].text
        if include_reference:
            refs = questions[r.question_id].reference_answers
            if refs:
                metadata["reference_answer"] = "\n".join(refs)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise StoreError(f"embedding failed for response {r.id!r}: zero vector")
        entries.append(Entry(vector=np.asarray(vec) / norm, metadata=metadata))
    dim = embedder.dim
    return VectorStore(dim=dim, embedder_id=embedder.embedder_id, entries=entries)


def entry_from_response(
    response: Response, embedder: BaseEmbedder
) -> Entry:
    vec = embedder.embed_scoped(response.text, response.question_id)
    vec = np.asarray(vec, dtype=np.float64)
    return Entry(
        vector=vec / np.linalg.norm(vec),
        metadata={
            "response_text": response.text,
            "judgment": response.label.value,
            "response_id": response.id,
            "question_id": response.question_id,
        },
    )


def top_k(
    store: VectorStore,
    query_text: str,
    embedder: BaseEmbedder,
    config: RetrievalConfig,
    question_id: str | None = None,
) -> list[tuple[Entry, float]]:
    """Exact cosine top-k over the store's candidate entries.

    With same_question_only, candidates are restricted to entries whose
    question_id matches the query's.  Scores are the full matrix product
    of candidate rows with the unit query vector, sorted descending with
    ascending-index tie-break.  Fewer than k candidates return them all;
    zero candidates is an error.
    """
    if config.same_question_only:
        if question_id is None:
            raise StoreError("same_question_only retrieval needs the query's question_id")
        candidates = [
            i
            for i, e in enumerate(store.entries)
            if e.metadata.get("question_id") == question_id
        ]
    else:
        candidates = list(range(len(store.entries)))
    if not candidates:
        raise StoreError("no candidate entries after scope filtering")

    query = np.asarray(embedder.embed_scoped(query_text, question_id), dtype=np.float64)
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise StoreError("query embedded to the zero vector")
    query = query / norm

    matrix = store.matrix().astype(np.float64)[candidates]
    scores = matrix @ query
    order = np.argsort(-scores, kind="stable")[: config.k]
    return [(store.entries[candidates[i]], float(scores[i])) for i in order]
