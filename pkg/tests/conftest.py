from pathlib import Path

import pytest

from ragrade.corpus import Corpus, Label, Question, Response

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance, printed after the run
ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, status in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status:<5} {name}")


def make_corpus(
    questions: dict[str, str],
    responses: list[tuple[str, str, str, Label]],
    references: dict[str, list[str]] | None = None,
    name: str = "test",
) -> Corpus:
    """Corpus from (response_id, question_id, split, label) rows.

    Response text defaults to a distinct token sequence per id so hash
    embeddings are distinguishable; pass a 5-tuple with explicit text to
    control similarity structure.
    """
    references = references or {}
    qmap = {
        qid: Question(id=qid, text=text, reference_answers=tuple(references.get(qid, ())))
        for qid, text in questions.items()
    }
    splits: dict[str, list[Response]] = {}
    for row in responses:
        if len(row) == 4:
            rid, qid, split, label = row
            text = f"answer tokens {rid} {qid}"
        else:
            rid, qid, split, label, text = row
        splits.setdefault(split, []).append(
            Response(id=rid, question_id=qid, text=text, label=label)
        )
    return Corpus(
        name=name, questions=qmap, splits={s: tuple(rs) for s, rs in splits.items()}
    )


@pytest.fixture
def tiny_corpus_path() -> Path:
    return FIXTURES / "tiny.jsonl"


@pytest.fixture
def tiny_corpus(tiny_corpus_path):
    from ragrade.corpus import parse_jsonl

    return parse_jsonl(tiny_corpus_path)
