"""Summary generation: teacher corpus building and student inference."""

from __future__ import annotations

from dataclasses import dataclass, replace
from statistics import mean, median
from typing import Mapping, Sequence

from personasum import PersonasumError
from personasum.corpus import Document, count_words
from personasum.gateway import CompletionConfig, Gateway, GatewayError
from personasum.prompts import (
    DEFAULT_REGISTRY,
    Persona,
    PersonaRegistry,
    render_generation_prompt,
    render_inference_prompt,
)

ORIGINS = ("teacher", "student", "human")


class GenerationError(PersonasumError):
    pass


class EmptyGeneration(GenerationError):
    """The model returned empty text for a summary request."""


class MissingDocument(GenerationError):
    pass


@dataclass(frozen=True)
class PersonaSummary:
    doc_id: str
    persona: str
    text: str
    origin: str
    word_count: int
    filter_flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")

    def key(self) -> str:
        return f"{self.doc_id}:{self.persona}"

    def with_flags(self, flags: Sequence[str]) -> "PersonaSummary":
        return replace(self, filter_flags=tuple(flags))

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "persona": self.persona,
            "text": self.text,
            "origin": self.origin,
            "word_count": self.word_count,
            "filter_flags": sorted(self.filter_flags),
        }

    @classmethod
    def from_record(cls, record: dict) -> "PersonaSummary":
        return cls(
            doc_id=record["doc_id"],
            persona=record["persona"],
            text=record["text"],
            origin=record["origin"],
            word_count=int(record["word_count"]),
            filter_flags=tuple(record.get("filter_flags", ())),
        )

    @classmethod
    def build(cls, doc_id: str, persona: str, text: str, origin: str) -> "PersonaSummary":
        return cls(doc_id=doc_id, persona=persona, text=text, origin=origin,
                   word_count=count_words(text))


@dataclass
class GenerationFailure:
    doc_id: str
    persona: str
    error: str

    def to_record(self) -> dict:
        return {"doc_id": self.doc_id, "persona": self.persona, "error": self.error}


def generate_for_document(
    document: Document,
    personas: Sequence[Persona | str],
    gateway: Gateway,
    config: CompletionConfig,
    registry: PersonaRegistry = DEFAULT_REGISTRY,
) -> tuple[list[PersonaSummary], list[GenerationFailure]]:
    """One teacher summary per persona; failures are collected, not fatal.

    A persona whose completion comes back empty raises EmptyGeneration into
    the failure list. The document counts as skipped only when every persona
    failed.
    """
    summaries: list[PersonaSummary] = []
    failures: list[GenerationFailure] = []
    for persona in personas:
        p = registry.get(persona) if isinstance(persona, str) else persona
        prompt = render_generation_prompt(p, document.body, registry=registry)
        try:
            result = gateway.complete(prompt, config)
            text = result.text.strip()
            if not text:
                raise EmptyGeneration(f"empty completion for {document.doc_id}:{p.name}")
            summaries.append(PersonaSummary.build(document.doc_id, p.name, text, "teacher"))
        except (GatewayError, EmptyGeneration) as exc:
            failures.append(GenerationFailure(document.doc_id, p.name, str(exc)))
    return summaries, failures


def infer_student(
    document: Document,
    persona: Persona | str,
    gateway: Gateway,
    config: CompletionConfig,
    registry: PersonaRegistry = DEFAULT_REGISTRY,
) -> PersonaSummary:
    """Student-origin summary via the fine-tuning prompt shape."""
    p = registry.get(persona) if isinstance(persona, str) else persona
    prompt = render_inference_prompt(p, document.body, registry=registry)
    result = gateway.complete(prompt, config)
    text = result.text.strip()
    if not text:
        raise EmptyGeneration(f"empty completion for {document.doc_id}:{p.name}")
    return PersonaSummary.build(document.doc_id, p.name, text, "student")


@dataclass
class LengthRatioReport:
    mean_ratio: float
    median_ratio: float
    per_persona: dict[str, float]
    pairs: int

    def to_record(self) -> dict:
        return {"mean_ratio": self.mean_ratio, "median_ratio": self.median_ratio,
                "per_persona": self.per_persona, "pairs": self.pairs}


def length_ratio_report(
    summaries: Sequence[PersonaSummary],
    documents: Mapping[str, Document] | Sequence[Document],
) -> LengthRatioReport:
    """Summary-to-document word-count ratios: mean, median, per-persona mean."""
    if not isinstance(documents, Mapping):
        documents = {d.doc_id: d for d in documents}
    if not summaries:
        raise GenerationError("no summaries to measure")
    ratios: list[float] = []
    per_persona: dict[str, list[float]] = {}
    for s in summaries:
        doc = documents.get(s.doc_id)
        if doc is None:
            raise MissingDocument(f"no document for summary {s.key()}")
        if doc.word_count == 0:
            continue
        ratio = s.word_count / doc.word_count
        ratios.append(ratio)
        per_persona.setdefault(s.persona, []).append(ratio)
    if not ratios:
        raise GenerationError("no measurable summary/document pairs")
    return LengthRatioReport(
        mean_ratio=mean(ratios),
        median_ratio=median(ratios),
        per_persona={p: mean(v) for p, v in sorted(per_persona.items())},
        pairs=len(ratios),
    )
