"""Annotation agreement statistics: Cohen's kappa, Pearson r, task accuracies."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

from personasum import PersonasumError

COMPARATIVE_BUCKETS = ("finetuned_better", "both_good", "ground_truth_better", "both_bad")

GOODNESS_GOOD = 2 / 3
GOODNESS_AVERAGE = 1 / 3


class AgreementError(PersonasumError):
    pass


class LengthMismatch(AgreementError):
    pass


class EmptyInput(AgreementError):
    pass


class DegenerateVariance(AgreementError):
    pass


class MissingTruth(AgreementError):
    pass


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Expected agreement comes from the two labelers' observed marginals.
    Two identical constant vectors give p_e = 1; that case returns 1.0
    rather than 0/0.
    """
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"label vectors differ: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("no labels")
    agree = sum(1 for a, b in zip(labels_a, labels_b) if a == b)
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    # Scale by n^2 and stay in integers; the one division at the end keeps
    # rational results (like 500/1250) correctly rounded.
    chance = sum(marg_a[c] * marg_b[c] for c in marg_a)
    denom = n * n - chance
    if denom == 0:
        return 1.0 if agree == n else 0.0
    return (n * agree - chance) / denom


def kappa_from_confusion(matrix: Sequence[Sequence[int]]) -> float:
    """Kappa from a square confusion matrix (rows: labeler A, cols: labeler B)."""
    labels_a: list[int] = []
    labels_b: list[int] = []
    for i, row in enumerate(matrix):
        for j, count in enumerate(row):
            if count < 0:
                raise AgreementError("confusion counts must be >= 0")
            labels_a.extend([i] * count)
            labels_b.extend([j] * count)
    return cohen_kappa(labels_a, labels_b)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise LengthMismatch(f"series differ: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise EmptyInput("need at least two points")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        raise DegenerateVariance("a series has zero variance")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


def goodness_label(score: float) -> str:
    """Bin a [0, 1] quality score: >= 2/3 good, >= 1/3 average, else bad."""
    if not 0.0 <= score <= 1.0:
        raise AgreementError(f"score {score} outside [0, 1]")
    if score >= GOODNESS_GOOD:
        return "good"
    if score >= GOODNESS_AVERAGE:
        return "average"
    return "bad"


@dataclass
class AccuracyReport:
    pooled: float
    per_annotator: dict[str, float]
    per_doc_correct: dict[str, int] = field(default_factory=dict)
    slots_total: int = 0

    def to_record(self) -> dict:
        return {"pooled": self.pooled, "per_annotator": self.per_annotator,
                "slots_total": self.slots_total}


def persona_id_accuracy(
    assignments: Sequence[tuple[str, str, Mapping[str, str]]],
    truth: Mapping[str, Mapping[str, str]],
) -> AccuracyReport:
    """Score persona-identification annotations against hidden truth.

    assignments: (annotator_id, doc_id, {slot: persona}) triples where each
    mapping is a bijection onto the document's persona set. truth maps
    doc_id -> {slot: persona}. Because assignments are bijections over
    three slots, a document's correct count can only be 0, 1, or 3.
    """
    if not assignments:
        raise EmptyInput("no annotations")
    per_annotator_hits: dict[str, list[int]] = {}
    per_doc_correct: dict[str, int] = {}
    total_slots = 0
    total_hits = 0
    for annotator_id, doc_id, mapping in assignments:
        if doc_id not in truth:
            raise MissingTruth(f"no truth for document {doc_id!r}")
        answer = truth[doc_id]
        if set(mapping) != set(answer):
            raise MissingTruth(f"slots {sorted(mapping)} do not match truth for {doc_id!r}")
        correct = sum(1 for slot in mapping if mapping[slot] == answer[slot])
        per_doc_correct[f"{annotator_id}:{doc_id}"] = correct
        hits = per_annotator_hits.setdefault(annotator_id, [0, 0])
        hits[0] += correct
        hits[1] += len(mapping)
        total_hits += correct
        total_slots += len(mapping)
    return AccuracyReport(
        pooled=total_hits / total_slots,
        per_annotator={a: h / t for a, (h, t) in sorted(per_annotator_hits.items())},
        per_doc_correct=per_doc_correct,
        slots_total=total_slots,
    )


def comparative_tally(verdicts: Sequence[str]) -> dict[str, float]:
    """Percentage of comparative verdicts per bucket; buckets always sum to 100."""
    if not verdicts:
        raise EmptyInput("no verdicts")
    counts = Counter()
    for v in verdicts:
        if v not in COMPARATIVE_BUCKETS:
            raise AgreementError(f"unknown verdict {v!r}")
        counts[v] += 1
    n = len(verdicts)
    return {bucket: 100.0 * counts[bucket] / n for bucket in COMPARATIVE_BUCKETS}


def quality_useful_pct(flags: Sequence[bool]) -> float:
    if not flags:
        raise EmptyInput("no quality annotations")
    return 100.0 * sum(1 for f in flags if f) / len(flags)
