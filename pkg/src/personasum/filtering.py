"""Four-step quality filter for generated summaries.

Steps run in a fixed order: markup/special characters, incompleteness,
cross-persona near-duplicates, ungrounded numbers or lexicon terms.
Removal is sequential: a record removed at step k is not evaluated at
later steps unless exhaustive reporting is requested.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from personasum import PersonasumError
from personasum.corpus import Document, normalize_whitespace
from personasum.generation import PersonaSummary
from personasum.metrics import rouge_l
from personasum.prompts import DEFAULT_REGISTRY, PersonaRegistry

STEP_NAMES = ("special_chars", "incomplete", "conflict", "hallucination")

CONFLICT_THRESHOLD = 0.85
FUZZY_THRESHOLD = 0.95
SPECIAL_CHAR_RATIO = 0.05

_TAG = re.compile(r"</?[A-Za-z][^>]*>")
_NUMBER = re.compile(r"\d+(?:,\d{3})*(?:\.\d+)?")
_ALLOWED_PUNCT = frozenset(".,;:'\"()-!?/%")
_TRAILING_CLOSERS = "\"')]}’”"


class FilterError(PersonasumError):
    pass


class LexiconMissing(FilterError):
    pass


def load_lexicon(path: str | Path) -> frozenset[str]:
    """One term per line, lowercased and whitespace-collapsed; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise LexiconMissing(f"lexicon file not found: {path}")
    terms = set()
    for line in path.read_text("utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            terms.add(normalize_whitespace(line).lower())
    return frozenset(terms)


def step1_special_chars(text: str) -> tuple[bool, str]:
    """Markup tags, three or more '#', or > 5% characters outside the allowed set."""
    tag = _TAG.search(text)
    if tag:
        return True, f"markup tag {tag.group(0)!r}"
    hashes = text.count("#")
    if hashes >= 3:
        return True, f"{hashes} '#' characters"
    if text:
        special = sum(
            1 for ch in text
            if not (ch.isalpha() or ch.isdigit() or ch.isspace() or ch in _ALLOWED_PUNCT)
        )
        ratio = special / len(text)
        if ratio > SPECIAL_CHAR_RATIO:
            return True, f"special character ratio {ratio:.3f}"
    return False, ""


def step2_incomplete(text: str) -> tuple[bool, str]:
    """Missing terminal punctuation or unbalanced quotes/parentheses."""
    stripped = text.rstrip()
    while stripped and stripped[-1] in _TRAILING_CLOSERS:
        stripped = stripped[:-1].rstrip()
    if not stripped or stripped[-1] not in ".!?":
        tail = stripped[-12:] if stripped else ""
        return True, f"no terminal punctuation (ends {tail!r})"
    if text.count('"') % 2 != 0:
        return True, "unbalanced double quotes"
    depth = 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return True, "unbalanced parentheses"
    if depth != 0:
        return True, "unbalanced parentheses"
    return False, ""


@dataclass(frozen=True)
class ConflictPair:
    key_a: str
    key_b: str
    f1: float


def step3_conflict(summaries: Sequence[PersonaSummary],
                   threshold: float = CONFLICT_THRESHOLD) -> list[ConflictPair]:
    """Flag same-document persona pairs whose ROUGE-L F1 meets the threshold.

    Both members of a flagged pair are reported; the removal policy is
    decided by run_filter.
    """
    pairs = []
    for i in range(len(summaries)):
        for j in range(i + 1, len(summaries)):
            a, b = summaries[i], summaries[j]
            if a.doc_id != b.doc_id or a.persona == b.persona:
                continue
            f1 = rouge_l(a.text, b.text).f1
            if f1 >= threshold:
                pairs.append(ConflictPair(a.key(), b.key(), f1))
    return pairs


def jaro_winkler(a: str, b: str) -> float:
    """Jaro-Winkler similarity with the standard 0.1 prefix scale, 4-char cap."""
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    window = max(la, lb) // 2 - 1
    if window < 0:
        window = 0
    match_a = [False] * la
    match_b = [False] * lb
    matches = 0
    for i in range(la):
        lo = max(0, i - window)
        hi = min(lb, i + window + 1)
        for j in range(lo, hi):
            if not match_b[j] and a[i] == b[j]:
                match_a[i] = True
                match_b[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    trans = 0
    j = 0
    for i in range(la):
        if match_a[i]:
            while not match_b[j]:
                j += 1
            if a[i] != b[j]:
                trans += 1
            j += 1
    trans //= 2
    jaro = (matches / la + matches / lb + (matches - trans) / matches) / 3
    prefix = 0
    for x, y in zip(a[:4], b[:4]):
        if x == y:
            prefix += 1
        else:
            break
    return jaro + prefix * 0.1 * (1 - jaro)


def _extract_numbers(text: str) -> set[str]:
    return {m.group(0).replace(",", "") for m in _NUMBER.finditer(text)}


def _term_pattern(terms: Iterable[str]) -> re.Pattern | None:
    ordered = sorted(terms, key=len, reverse=True)  # longest match wins
    if not ordered:
        return None
    return re.compile(
        r"(?<![0-9A-Za-z])(" + "|".join(re.escape(t) for t in ordered) + r")(?![0-9A-Za-z])")


def step4_hallucination(text: str, document_body: str, lexicon: frozenset[str],
                        fuzzy: bool = False) -> tuple[bool, list[str]]:
    """Numbers and lexicon terms in the summary must occur in the document.

    Numbers compare as strings after thousands separators are removed.
    Lexicon terms match longest-first on word boundaries, case-insensitive.
    With fuzzy on, a term is still grounded if some same-length document
    span reaches Jaro-Winkler >= 0.95 (numbers stay exact).
    """
    if lexicon is None:
        raise LexiconMissing("no lexicon supplied for hallucination screening")
    offending: list[str] = []
    doc_numbers = _extract_numbers(document_body)
    for number in sorted(_extract_numbers(text)):
        if number not in doc_numbers:
            offending.append(number)
    norm_summary = normalize_whitespace(text).lower()
    norm_doc = normalize_whitespace(document_body).lower()
    pattern = _term_pattern(lexicon)
    if pattern is not None:
        found = {m.group(1) for m in pattern.finditer(norm_summary)}
        doc_tokens = norm_doc.split()
        for term in sorted(found):
            if pattern_grounded(term, norm_doc, doc_tokens, fuzzy):
                continue
            offending.append(term)
    return bool(offending), offending


def pattern_grounded(term: str, norm_doc: str, doc_tokens: list[str], fuzzy: bool) -> bool:
    boundary = re.compile(
        r"(?<![0-9A-Za-z])" + re.escape(term) + r"(?![0-9A-Za-z])")
    if boundary.search(norm_doc):
        return True
    if not fuzzy:
        return False
    width = len(term.split())
    spans = (" ".join(doc_tokens[i:i + width]) for i in range(len(doc_tokens) - width + 1))
    return any(jaro_winkler(term, span) >= FUZZY_THRESHOLD for span in spans)


@dataclass
class StepStats:
    name: str
    removed_count: int
    removed_pct: float
    removed_keys: list[str] = field(default_factory=list)
    evidence: dict[str, str] = field(default_factory=dict)


@dataclass
class FilterReport:
    pre_count: int
    kept_count: int
    steps: list[StepStats]
    overall_removed_pct: float
    conflict_pairs: list[ConflictPair] = field(default_factory=list)
    exhaustive: bool = False
    exhaustive_flags: dict[str, list[str]] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "pre_count": self.pre_count,
            "kept_count": self.kept_count,
            "overall_removed_pct": self.overall_removed_pct,
            "steps": [
                {"name": s.name, "removed_count": s.removed_count,
                 "removed_pct": s.removed_pct, "removed_keys": sorted(s.removed_keys)}
                for s in self.steps
            ],
            "conflict_pairs": [
                {"a": p.key_a, "b": p.key_b, "f1": p.f1} for p in self.conflict_pairs
            ],
            "exhaustive": self.exhaustive,
            "exhaustive_flags": {k: sorted(v) for k, v in sorted(self.exhaustive_flags.items())},
        }


def _persona_rank(registry: PersonaRegistry, persona: str) -> tuple[int, str]:
    names = registry.names()
    try:
        return (names.index(persona), persona)
    except ValueError:
        return (len(names), persona)


def run_filter(
    summaries: Sequence[PersonaSummary],
    documents: Mapping[str, Document] | Sequence[Document],
    lexicon: frozenset[str],
    threshold: float = CONFLICT_THRESHOLD,
    fuzzy: bool = False,
    exhaustive: bool = False,
    registry: PersonaRegistry = DEFAULT_REGISTRY,
) -> tuple[list[PersonaSummary], FilterReport]:
    """Apply the four steps in order and report per-step removal.

    Conflicting clusters at step 3 keep their earliest record in registry
    persona order; later members are removed. Returned kept records carry
    empty filter_flags; removed records are not returned but are listed in
    the report by key.
    """
    if not isinstance(documents, Mapping):
        documents = {d.doc_id: d for d in documents}
    pre_count = len(summaries)
    if pre_count == 0:
        raise FilterError("no summaries to filter")
    for s in summaries:
        if s.doc_id not in documents:
            raise FilterError(f"summary {s.key()} has no source document")

    alive: list[PersonaSummary] = list(summaries)
    steps: list[StepStats] = []
    removed_at: dict[str, str] = {}
    all_conflicts: list[ConflictPair] = []

    def finish_step(name: str, removed: list[PersonaSummary], evidence: dict[str, str]):
        nonlocal alive
        keys = [s.key() for s in removed]
        for key in keys:
            removed_at[key] = name
        steps.append(StepStats(
            name=name,
            removed_count=len(removed),
            removed_pct=100.0 * len(removed) / pre_count,
            removed_keys=keys,
            evidence=evidence,
        ))
        gone = set(keys)
        alive = [s for s in alive if s.key() not in gone]

    # Step 1: special characters and markup
    removed, evidence = [], {}
    for s in alive:
        flag, why = step1_special_chars(s.text)
        if flag:
            removed.append(s)
            evidence[s.key()] = why
    finish_step("special_chars", removed, evidence)

    # Step 2: incompleteness
    removed, evidence = [], {}
    for s in alive:
        flag, why = step2_incomplete(s.text)
        if flag:
            removed.append(s)
            evidence[s.key()] = why
    finish_step("incomplete", removed, evidence)

    # Step 3: cross-persona conflicts; keep the earliest persona per cluster
    removed, evidence = [], {}
    by_doc: dict[str, list[PersonaSummary]] = {}
    for s in alive:
        by_doc.setdefault(s.doc_id, []).append(s)
    for doc_id in sorted(by_doc):
        group = by_doc[doc_id]
        pairs = step3_conflict(group, threshold=threshold)
        if not pairs:
            continue
        all_conflicts.extend(pairs)
        adjacency: dict[str, set[str]] = {}
        for pair in pairs:
            adjacency.setdefault(pair.key_a, set()).add(pair.key_b)
            adjacency.setdefault(pair.key_b, set()).add(pair.key_a)
        seen: set[str] = set()
        by_key = {s.key(): s for s in group}
        for start in sorted(adjacency):
            if start in seen:
                continue
            cluster = []
            stack = [start]
            while stack:
                key = stack.pop()
                if key in seen:
                    continue
                seen.add(key)
                cluster.append(key)
                stack.extend(adjacency.get(key, ()))
            cluster.sort(key=lambda k: _persona_rank(registry, by_key[k].persona))
            for key in cluster[1:]:
                removed.append(by_key[key])
                evidence[key] = f"near-duplicate of {cluster[0]}"
    finish_step("conflict", removed, evidence)

    # Step 4: ungrounded numbers or lexicon terms
    removed, evidence = [], {}
    for s in alive:
        flag, items = step4_hallucination(s.text, documents[s.doc_id].body, lexicon,
                                          fuzzy=fuzzy)
        if flag:
            removed.append(s)
            evidence[s.key()] = "ungrounded: " + ", ".join(items)
    finish_step("hallucination", removed, evidence)

    exhaustive_flags: dict[str, list[str]] = {}
    if exhaustive:
        later = {name: i for i, name in enumerate(STEP_NAMES)}
        originals = {s.key(): s for s in summaries}
        for key, step_name in removed_at.items():
            record = originals[key]
            extra = []
            for name in STEP_NAMES[later[step_name] + 1:]:
                if name == "special_chars":
                    hit = step1_special_chars(record.text)[0]
                elif name == "incomplete":
                    hit = step2_incomplete(record.text)[0]
                elif name == "conflict":
                    siblings = [s for s in summaries
                                if s.doc_id == record.doc_id and s.key() != key]
                    hit = bool(step3_conflict([record] + siblings, threshold=threshold))
                else:
                    hit = step4_hallucination(record.text, documents[record.doc_id].body,
                                              lexicon, fuzzy=fuzzy)[0]
                if hit:
                    extra.append(name)
            if extra:
                exhaustive_flags[key] = extra

    kept = [s.with_flags([]) for s in alive]
    report = FilterReport(
        pre_count=pre_count,
        kept_count=len(kept),
        steps=steps,
        overall_removed_pct=100.0 * (pre_count - len(kept)) / pre_count,
        conflict_pairs=all_conflicts,
        exhaustive=exhaustive,
        exhaustive_flags=exhaustive_flags,
    )
    return kept, report
