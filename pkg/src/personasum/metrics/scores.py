"""Reference metrics implemented from their definitions.

All scores operate on the shared tokenizer (lowercase, split on
non-alphanumeric runs, digits kept) and return values in [0, 1].
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Protocol, Sequence

import requests

from personasum import PersonasumError
from personasum.metrics.lcs import lcs_length
from personasum.metrics.stem import stem

# \w minus underscore: unicode letters and digits survive, everything
# else (punctuation, symbols, whitespace) splits.
_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class MetricError(PersonasumError):
    pass


class EmbedderUnavailable(MetricError):
    """The embedding endpoint could not produce vectors."""


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _tokens(value: str | Sequence[str]) -> list[str]:
    if isinstance(value, str):
        return tokenize(value)
    return list(value)


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _prf(overlap: float, cand_total: float, ref_total: float) -> PRF:
    if cand_total == 0 or ref_total == 0:
        return PRF(0.0, 0.0, 0.0)
    p = overlap / cand_total
    r = overlap / ref_total
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return PRF(p, r, f1)


def rouge_n(candidate: str | Sequence[str], reference: str | Sequence[str], n: int) -> PRF:
    """Clipped n-gram overlap precision/recall/F1."""
    c = _tokens(candidate)
    r = _tokens(reference)
    cn = Counter(ngrams(c, n))
    rn = Counter(ngrams(r, n))
    overlap = sum((cn & rn).values())
    return _prf(overlap, sum(cn.values()), sum(rn.values()))


def rouge_1(candidate: str | Sequence[str], reference: str | Sequence[str]) -> PRF:
    return rouge_n(candidate, reference, 1)


def rouge_2(candidate: str | Sequence[str], reference: str | Sequence[str]) -> PRF:
    return rouge_n(candidate, reference, 2)


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str]) -> PRF:
    """LCS-based precision/recall/F1."""
    c = _tokens(candidate)
    r = _tokens(reference)
    overlap = lcs_length(c, r)
    return _prf(overlap, len(c), len(r))


def bleu(candidate: str | Sequence[str], reference: str | Sequence[str], max_n: int = 4) -> float:
    """Smoothed sentence BLEU.

    For n >= 2 a zero clipped count contributes 1 / (total + 1) instead of
    zero; a zero unigram precision short-circuits to 0. The brevity penalty
    exp(1 - |ref| / |cand|) applies only when the candidate is shorter.
    """
    c = _tokens(candidate)
    r = _tokens(reference)
    if not c or not r:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cn = Counter(ngrams(c, n))
        rn = Counter(ngrams(r, n))
        clipped = sum((cn & rn).values())
        total = sum(cn.values())
        if n == 1:
            if clipped == 0:
                return 0.0
            p = clipped / total
        elif clipped == 0:
            p = 1.0 / (total + 1)
        else:
            p = clipped / total
        log_sum += math.log(p)
    bp = 1.0 if len(c) >= len(r) else math.exp(1.0 - len(r) / len(c))
    return bp * math.exp(log_sum / max_n)


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Two-stage unigram alignment: exact first, Porter stems second.

    Each candidate token takes the earliest unmatched reference token,
    scanning left to right, which maximizes matches per stage and breaks
    ties toward the fewest crossings.
    """
    matched_c: list[int | None] = [None] * len(candidate)
    used_r = [False] * len(reference)
    for i, tok in enumerate(candidate):
        for j, rtok in enumerate(reference):
            if not used_r[j] and rtok == tok:
                matched_c[i] = j
                used_r[j] = True
                break
    c_stems = [stem(t) for t in candidate]
    r_stems = [stem(t) for t in reference]
    for i in range(len(candidate)):
        if matched_c[i] is not None:
            continue
        for j in range(len(reference)):
            if not used_r[j] and r_stems[j] == c_stems[i]:
                matched_c[i] = j
                used_r[j] = True
                break
    return [(i, j) for i, j in enumerate(matched_c) if j is not None]


def meteor(candidate: str | Sequence[str], reference: str | Sequence[str]) -> float:
    """Unigram METEOR: Fmean = 10PR / (R + 9P), penalty = 0.5 (chunks / m)^3."""
    c = _tokens(candidate)
    r = _tokens(reference)
    if not c or not r:
        return 0.0
    pairs = _align(c, r)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(c)
    rec = m / len(r)
    fmean = 10 * p * rec / (rec + 9 * p)
    chunks = 1
    for (ci, cj), (ni, nj) in zip(pairs, pairs[1:]):
        if not (ni == ci + 1 and nj == cj + 1):
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1.0 - penalty)


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> tuple[list[str], list[list[float]]]:
        """Return (tokens, one vector per token)."""
        ...


class HttpEmbeddingProvider:
    """POSTs {"text": ...} and expects {"tokens": [...], "vectors": [[...]]}."""

    def __init__(self, endpoint_url: str, timeout_s: float = 30.0):
        self.endpoint_url = endpoint_url
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def embed(self, text: str) -> tuple[list[str], list[list[float]]]:
        try:
            resp = self._session.post(self.endpoint_url, json={"text": text},
                                      timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise EmbedderUnavailable(f"embedder unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EmbedderUnavailable(f"embedder returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            tokens = list(payload["tokens"])
            vectors = [list(map(float, v)) for v in payload["vectors"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbedderUnavailable(f"embedder response malformed: {exc}") from exc
        if len(tokens) != len(vectors):
            raise EmbedderUnavailable("embedder returned mismatched tokens/vectors")
        return tokens, vectors


def _unit(vec: list[float]) -> list[float]:
    norm = math.sqrt(sum(x * x for x in vec))
    if norm == 0:
        return vec
    return [x / norm for x in vec]


def bertscore(candidate_text: str, reference_text: str,
              embedder: EmbeddingProvider) -> PRF:
    """Greedy cosine matching over contextual token embeddings.

    Similarities are floored at zero so the score stays in [0, 1] whatever
    the embedding geometry.
    """
    _, cvecs = embedder.embed(candidate_text)
    _, rvecs = embedder.embed(reference_text)
    if not cvecs or not rvecs:
        return PRF(0.0, 0.0, 0.0)
    cu = [_unit(v) for v in cvecs]
    ru = [_unit(v) for v in rvecs]
    sims = [[max(0.0, sum(x * y for x, y in zip(cv, rv))) for rv in ru] for cv in cu]
    p = sum(max(row) for row in sims) / len(cu)
    r = sum(max(sims[i][j] for i in range(len(cu))) for j in range(len(ru))) / len(ru)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return PRF(p, r, f1)


@dataclass
class MetricReport:
    """All metrics for one candidate/reference pair; bert is None when no embedder ran."""

    doc_id: str
    persona: str
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF
    bleu: float
    meteor: float
    bert: PRF | None = None

    def to_record(self) -> dict:
        record = {
            "doc_id": self.doc_id,
            "persona": self.persona,
            "bleu": self.bleu,
            "meteor": self.meteor,
        }
        for name, prf in (("rouge1", self.rouge1), ("rouge2", self.rouge2),
                          ("rougeL", self.rougeL)):
            record[f"{name}_p"] = prf.precision
            record[f"{name}_r"] = prf.recall
            record[f"{name}_f1"] = prf.f1
        if self.bert is not None:
            record["bert_p"] = self.bert.precision
            record["bert_r"] = self.bert.recall
            record["bert_f1"] = self.bert.f1
        return record


def score_pair(candidate_text: str, reference_text: str, doc_id: str = "",
               persona: str = "", embedder: EmbeddingProvider | None = None) -> MetricReport:
    report = MetricReport(
        doc_id=doc_id,
        persona=persona,
        rouge1=rouge_n(candidate_text, reference_text, 1),
        rouge2=rouge_n(candidate_text, reference_text, 2),
        rougeL=rouge_l(candidate_text, reference_text),
        bleu=bleu(candidate_text, reference_text),
        meteor=meteor(candidate_text, reference_text),
    )
    if embedder is not None:
        report.bert = bertscore(candidate_text, reference_text, embedder)
    return report


_AGG_KEYS = ("rouge1", "rouge2", "rougeL", "meteor", "bleu")
_BERT_KEYS = ("bert_prec", "bert_rec", "bert_f1")


def _aggregate(reports: list[MetricReport], with_bert: bool) -> dict[str, float]:
    n = len(reports)
    agg = {
        "rouge1": sum(r.rouge1.f1 for r in reports) / n,
        "rouge2": sum(r.rouge2.f1 for r in reports) / n,
        "rougeL": sum(r.rougeL.f1 for r in reports) / n,
        "meteor": sum(r.meteor for r in reports) / n,
        "bleu": sum(r.bleu for r in reports) / n,
    }
    if with_bert:
        agg["bert_prec"] = sum(r.bert.precision for r in reports) / n
        agg["bert_rec"] = sum(r.bert.recall for r in reports) / n
        agg["bert_f1"] = sum(r.bert.f1 for r in reports) / n
    return agg


@dataclass
class CorpusMetricReport:
    reports: list[MetricReport]
    overall: dict[str, float]
    per_persona: dict[str, dict[str, float]]
    bert_available: bool

    def to_record(self) -> dict:
        return {"overall": self.overall, "per_persona": self.per_persona,
                "bert_available": self.bert_available, "pairs": len(self.reports)}


def evaluate_corpus(pairs: Iterable[tuple[str, str, str, str]],
                    embedder: EmbeddingProvider | None = None) -> CorpusMetricReport:
    """Score (doc_id, persona, candidate, reference) pairs and average.

    Aggregates are unweighted means; ROUGE columns aggregate the F1. If the
    embedder fails mid-run the BERT columns are dropped everywhere and the
    run continues.
    """
    pairs = list(pairs)
    reports = []
    for doc_id, persona, candidate, reference in pairs:
        reports.append(score_pair(candidate, reference, doc_id=doc_id, persona=persona))
    if not reports:
        raise MetricError("no pairs to evaluate")
    bert_ok = embedder is not None
    if embedder is not None:
        for report, (_, _, candidate, reference) in zip(reports, pairs):
            try:
                report.bert = bertscore(candidate, reference, embedder)
            except EmbedderUnavailable:
                bert_ok = False
                for r in reports:
                    r.bert = None
                break
    overall = _aggregate(reports, bert_ok)
    per_persona: dict[str, dict[str, float]] = {}
    for persona in sorted({r.persona for r in reports}):
        subset = [r for r in reports if r.persona == persona]
        per_persona[persona] = _aggregate(subset, bert_ok)
    return CorpusMetricReport(reports=reports, overall=overall,
                              per_persona=per_persona, bert_available=bert_ok)
