"""Teacher generation, student inference, and length accounting."""

from __future__ import annotations

import pytest

from personasum.corpus import Document
from personasum.gateway import CompletionResult, EndpointUnreachable
from personasum.generation import (
    EmptyGeneration,
    GenerationError,
    MissingDocument,
    PersonaSummary,
    generate_for_document,
    infer_student,
    length_ratio_report,
)

from conftest import make_corpus
from llm_mock import student_summary, teacher_summary

PERSONAS = ("doctor", "patient", "normal person")


def test_summary_record_round_trip():
    s = PersonaSummary.build("d1", "doctor", "Two words.", "teacher")
    assert s.word_count == 2
    assert s.key() == "d1:doctor"
    assert PersonaSummary.from_record(s.to_record()) == s


def test_summary_rejects_unknown_origin():
    with pytest.raises(ValueError):
        PersonaSummary.build("d1", "doctor", "Text.", "oracle")


def test_with_flags_returns_new_value():
    s = PersonaSummary.build("d1", "doctor", "Text here.", "teacher")
    flagged = s.with_flags(["conflict"])
    assert flagged.filter_flags == ("conflict",)
    assert s.filter_flags == ()


def test_generate_for_document(gateway, config, corpus):
    doc = corpus[0]
    summaries, failures = generate_for_document(doc, PERSONAS, gateway, config())
    assert failures == []
    assert [s.persona for s in summaries] == list(PERSONAS)
    for s in summaries:
        assert s.origin == "teacher"
        assert s.doc_id == doc.doc_id
        assert s.text == teacher_summary(s.persona, doc.body)
        assert s.word_count > 0
    # persona slices diverge by construction
    texts = {s.text for s in summaries}
    assert len(texts) == 3


def test_generate_collects_partial_failures(gateway, config, corpus, monkeypatch):
    doc = corpus[0]
    original = gateway.complete

    def flaky(prompt, cfg):
        if "perspective of a patient " in prompt.user:
            raise EndpointUnreachable("scripted outage")
        return original(prompt, cfg)

    monkeypatch.setattr(gateway, "complete", flaky)
    summaries, failures = generate_for_document(doc, PERSONAS, gateway, config())
    assert [s.persona for s in summaries] == ["doctor", "normal person"]
    assert len(failures) == 1
    assert failures[0].persona == "patient"
    assert "outage" in failures[0].error
    assert failures[0].to_record()["doc_id"] == doc.doc_id


def test_generate_empty_text_is_a_failure(gateway, config, corpus, monkeypatch):
    doc = corpus[0]

    def blank(prompt, cfg):
        return CompletionResult(text="   ", prompt_hash="x", from_cache=False,
                                latency_ms=0.0, attempt_count=1)

    monkeypatch.setattr(gateway, "complete", blank)
    summaries, failures = generate_for_document(doc, ["doctor"], gateway, config())
    assert summaries == []
    assert len(failures) == 1
    assert "empty" in failures[0].error


def test_infer_student(gateway, config, corpus):
    doc = corpus[1]
    s = infer_student(doc, "patient", gateway, config(role="student"))
    assert s.origin == "student"
    assert s.text == student_summary("patient", doc.body)
    assert s.text != teacher_summary("patient", doc.body)


def test_infer_student_empty_raises(gateway, config, corpus, monkeypatch):
    def blank(prompt, cfg):
        return CompletionResult(text="", prompt_hash="x", from_cache=False,
                                latency_ms=0.0, attempt_count=1)

    monkeypatch.setattr(gateway, "complete", blank)
    with pytest.raises(EmptyGeneration):
        infer_student(corpus[0], "doctor", gateway, config())


def _doc(doc_id: str, n_words: int) -> Document:
    return Document(doc_id=doc_id, source_url="u", title="", split="train",
                    body=" ".join(["w"] * n_words), word_count=n_words)


def _sum(doc_id: str, persona: str, n_words: int) -> PersonaSummary:
    return PersonaSummary.build(doc_id, persona, " ".join(["s"] * n_words), "teacher")


def test_length_ratio_report_oracle():
    docs = [_doc("d1", 40), _doc("d2", 40)]
    summaries = [
        _sum("d1", "doctor", 20),   # 0.5
        _sum("d1", "patient", 10),  # 0.25
        _sum("d2", "doctor", 30),   # 0.75
    ]
    report = length_ratio_report(summaries, docs)
    assert report.pairs == 3
    assert report.mean_ratio == pytest.approx(0.5)
    assert report.median_ratio == pytest.approx(0.5)
    assert report.per_persona == {"doctor": pytest.approx(0.625),
                                  "patient": pytest.approx(0.25)}
    record = report.to_record()
    assert record["pairs"] == 3


def test_length_ratio_errors():
    docs = [_doc("d1", 40)]
    with pytest.raises(GenerationError):
        length_ratio_report([], docs)
    with pytest.raises(MissingDocument):
        length_ratio_report([_sum("ghost", "doctor", 5)], docs)


def test_teacher_results_are_cached_for_replay(gateway, config, corpus):
    doc = corpus[2]
    first, _ = generate_for_document(doc, PERSONAS, gateway, config())
    second, _ = generate_for_document(doc, PERSONAS, gateway, config())
    assert [s.text for s in first] == [s.text for s in second]