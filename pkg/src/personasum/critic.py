"""LLM-judge critique: prompt the judge, parse its scores, derive goodness.

Judges are asked for four numbers (relevance, coverage, persona
importance, overall quality); the goodness grade is computed from the
quality score rather than requested, unless a manual annotation overrides it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from personasum import PersonasumError
from personasum.agreement import goodness_label, pearson
from personasum.corpus import Document
from personasum.gateway import CompletionConfig, CompletionResult, Gateway
from personasum.prompts import (
    DEFAULT_REGISTRY,
    ChatPrompt,
    Persona,
    PersonaRegistry,
    REASK_SUFFIX,
    render_critic_prompt,
)

CRITERIA_FIELDS = ("rel", "cov", "imp", "qlt")

_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")
# "1: 0.9", "criterion 2 - 0.8", "3.) 70%", with or without a criterion word
_LABELED = re.compile(
    r"(?:criteri(?:on|a|um)\s*)?\b([1-9])\s*[:=.)\]-]+\s*(-?\d+(?:\.\d+)?)\s*(%?)",
    re.IGNORECASE)
_JSON_BLOB = re.compile(r"\{.*\}", re.DOTALL)


class CritiqueError(PersonasumError):
    pass


class UnparseableScores(CritiqueError):
    """The judge text did not contain four usable scores."""


class KeyMismatch(CritiqueError):
    """Two judge runs cover different (doc_id, persona) sets."""


def _normalize(value: float) -> float | None:
    """Map percentages into [0, 1]; anything else out of range is a failure."""
    if 0.0 <= value <= 1.0:
        return value
    if 1.0 < value <= 100.0:
        return value / 100.0
    return None


def parse_scores(raw: str, expected: int = 4) -> tuple[float, ...]:
    """Extract criterion scores from judge text.

    Tries labeled lines first ("1: 0.9" or "Criterion 2: 80%"), then a
    JSON-like map, then a bare scan of the first `expected` numbers in
    order. Values in (1, 100] are treated as percentages. Out-of-range
    values and short outputs raise UnparseableScores.
    """
    if not raw or not raw.strip():
        raise UnparseableScores("empty judge response")

    labeled: dict[int, float] = {}
    for label, number, _pct in _LABELED.findall(raw):
        index = int(label)
        if 1 <= index <= expected and index not in labeled:
            labeled[index] = float(number)
    if len(labeled) == expected:
        scores = []
        for index in range(1, expected + 1):
            value = _normalize(labeled[index])
            if value is None:
                raise UnparseableScores(
                    f"criterion {index} score {labeled[index]} out of range")
            scores.append(value)
        return tuple(scores)
    if len(labeled) >= 2:
        # Clearly labeled output with criteria missing: refuse rather than
        # let the bare scan swallow the label digits as scores.
        raise UnparseableScores(
            f"labeled output covers criteria {sorted(labeled)} of 1..{expected}")

    blob = _JSON_BLOB.search(raw)
    if blob:
        try:
            payload = json.loads(blob.group(0))
        except ValueError:
            try:
                payload = json.loads(blob.group(0).replace("'", '"'))
            except ValueError:
                payload = None
        if isinstance(payload, Mapping):
            values = [v for v in payload.values() if isinstance(v, (int, float))]
            if len(values) >= expected:
                scores = []
                for v in values[:expected]:
                    value = _normalize(float(v))
                    if value is None:
                        raise UnparseableScores(f"score {v} out of range")
                    scores.append(value)
                return tuple(scores)

    numbers = [float(m.group(0)) for m in _NUMBER.finditer(raw)]
    if len(numbers) < expected:
        raise UnparseableScores(
            f"found {len(numbers)} numbers, expected {expected}: {raw[:120]!r}")
    scores = []
    for v in numbers[:expected]:
        value = _normalize(v)
        if value is None:
            raise UnparseableScores(f"score {v} out of range in {raw[:120]!r}")
        scores.append(value)
    return tuple(scores)


def derive_goodness(qlt: float, manual_label: str | None = None) -> tuple[str, str]:
    """Grade from the quality score, or the manual annotation when present."""
    if manual_label is not None:
        if manual_label not in ("good", "average", "bad"):
            raise CritiqueError(f"unknown goodness label {manual_label!r}")
        return manual_label, "manual_override"
    return goodness_label(qlt), "derived"


@dataclass
class CritiqueResult:
    doc_id: str
    persona: str
    rel: float
    cov: float
    imp: float
    qlt: float
    gds: str
    gds_source: str
    judge_id: str
    raw_response: str
    reasked: bool = False

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id, "persona": self.persona,
            "rel": self.rel, "cov": self.cov, "imp": self.imp, "qlt": self.qlt,
            "gds": self.gds, "gds_source": self.gds_source,
            "judge_id": self.judge_id, "raw_response": self.raw_response,
            "reasked": self.reasked,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CritiqueResult":
        return cls(
            doc_id=record["doc_id"], persona=record["persona"],
            rel=float(record["rel"]), cov=float(record["cov"]),
            imp=float(record["imp"]), qlt=float(record["qlt"]),
            gds=record["gds"], gds_source=record.get("gds_source", "derived"),
            judge_id=record.get("judge_id", ""),
            raw_response=record.get("raw_response", ""),
            reasked=bool(record.get("reasked", False)),
        )


def critique(
    document: Document,
    label_summary: str,
    model_summary: str,
    persona: Persona | str,
    gateway: Gateway,
    judge_config: CompletionConfig,
    manual_label: str | None = None,
    registry: PersonaRegistry = DEFAULT_REGISTRY,
) -> CritiqueResult:
    """Score one candidate with the judge; re-ask once on unparseable output."""
    p = registry.get(persona) if isinstance(persona, str) else persona
    prompt = render_critic_prompt(p, document.body, label_summary, model_summary,
                                  registry=registry)
    result = gateway.complete(prompt, judge_config)
    reasked = False
    try:
        scores = parse_scores(result.text)
    except UnparseableScores:
        reasked = True
        retry_prompt = ChatPrompt(system=prompt.system,
                                  user=prompt.user + "\n" + REASK_SUFFIX)
        result = gateway.complete(retry_prompt, judge_config)
        scores = parse_scores(result.text)  # second failure propagates
    rel, cov, imp, qlt = scores
    gds, gds_source = derive_goodness(qlt, manual_label)
    return CritiqueResult(
        doc_id=document.doc_id, persona=p.name,
        rel=rel, cov=cov, imp=imp, qlt=qlt,
        gds=gds, gds_source=gds_source,
        judge_id=judge_config.model_id, raw_response=result.text, reasked=reasked,
    )


def apply_manual_goodness(
    results: Sequence[CritiqueResult],
    overrides: Mapping[tuple[str, str], str],
) -> list[CritiqueResult]:
    """Replace derived grades with manual annotations keyed by (doc_id, persona)."""
    out = []
    for r in results:
        label = overrides.get((r.doc_id, r.persona))
        if label is None:
            out.append(r)
        else:
            gds, source = derive_goodness(r.qlt, label)
            out.append(CritiqueResult(
                doc_id=r.doc_id, persona=r.persona, rel=r.rel, cov=r.cov,
                imp=r.imp, qlt=r.qlt, gds=gds, gds_source=source,
                judge_id=r.judge_id, raw_response=r.raw_response, reasked=r.reasked))
    return out


@dataclass
class CritiqueTable:
    """Per-persona score means (x100) plus an average row, Gds as % good."""

    rows: dict[str, dict[str, float]]
    n: int

    def to_record(self) -> dict:
        return {"rows": self.rows, "n": self.n}


def aggregate_critiques(
    results: Sequence[CritiqueResult],
    registry: PersonaRegistry = DEFAULT_REGISTRY,
) -> CritiqueTable:
    if not results:
        raise CritiqueError("no critiques to aggregate")

    def row(subset: Sequence[CritiqueResult]) -> dict[str, float]:
        n = len(subset)
        return {
            "rel": 100.0 * sum(r.rel for r in subset) / n,
            "cov": 100.0 * sum(r.cov for r in subset) / n,
            "imp": 100.0 * sum(r.imp for r in subset) / n,
            "qlt": 100.0 * sum(r.qlt for r in subset) / n,
            "gds": 100.0 * sum(1 for r in subset if r.gds == "good") / n,
        }

    names = registry.names()
    present = {r.persona for r in results}
    ordered = [p for p in names if p in present]
    ordered += sorted(present - set(names))
    rows = {}
    for persona in ordered:
        rows[persona] = row([r for r in results if r.persona == persona])
    rows["average"] = row(list(results))
    return CritiqueTable(rows=rows, n=len(results))


@dataclass
class CrossJudgeReport:
    pearson_r: float
    per_criterion_delta: dict[str, float]
    n: int

    def to_record(self) -> dict:
        return {"pearson_r": self.pearson_r,
                "per_criterion_delta": self.per_criterion_delta, "n": self.n}


def cross_judge_compare(
    results_a: Sequence[CritiqueResult],
    results_b: Sequence[CritiqueResult],
) -> CrossJudgeReport:
    """Correlate two judges over shared items.

    Items pair by (doc_id, persona); differing key sets are an error.
    The correlation runs over per-item means of the four criteria; deltas
    are mean(b) - mean(a) per criterion.
    """
    index_a = {(r.doc_id, r.persona): r for r in results_a}
    index_b = {(r.doc_id, r.persona): r for r in results_b}
    if len(index_a) != len(results_a) or len(index_b) != len(results_b):
        raise KeyMismatch("duplicate (doc_id, persona) items in a judge run")
    if set(index_a) != set(index_b):
        missing = set(index_a) ^ set(index_b)
        raise KeyMismatch(f"judge runs cover different items, e.g. {sorted(missing)[:3]}")
    keys = sorted(index_a)
    means_a = []
    means_b = []
    for key in keys:
        a, b = index_a[key], index_b[key]
        means_a.append((a.rel + a.cov + a.imp + a.qlt) / 4)
        means_b.append((b.rel + b.cov + b.imp + b.qlt) / 4)
    deltas = {}
    for field_name in CRITERIA_FIELDS:
        mean_a = sum(getattr(index_a[k], field_name) for k in keys) / len(keys)
        mean_b = sum(getattr(index_b[k], field_name) for k in keys) / len(keys)
        deltas[field_name] = mean_b - mean_a
    return CrossJudgeReport(pearson_r=pearson(means_a, means_b),
                            per_criterion_delta=deltas, n=len(keys))
