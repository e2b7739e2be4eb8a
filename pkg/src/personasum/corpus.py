"""Document ingestion, normalization, and split assignment."""

from __future__ import annotations

import hashlib
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from personasum import PersonasumError

SPLITS = ("train", "validation", "test", "unassigned")

# Tag stripping runs before and after entity decoding; double-escaped
# entities must not reintroduce markup into the body.
_SCRIPT_STYLE = re.compile(r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_TAG = re.compile(r"</?[A-Za-z][^>]*>")
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_WS = re.compile(r"\s+")

# The five standard named entities; nbsp decodes to whitespace so the
# later collapse folds it into a single space.
_ENTITIES = {
    "&lt;": "<",
    "&gt;": ">",
    "&quot;": '"',
    "&nbsp;": " ",
    "&amp;": "&",
}


class CorpusError(PersonasumError):
    pass


class EmptyBody(CorpusError):
    """Normalized body is below the minimum word count."""


class CountOverflow(CorpusError):
    """Requested split sizes exceed the number of documents."""


@dataclass
class Document:
    doc_id: str
    source_url: str
    title: str
    body: str
    word_count: int
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, record: dict) -> "Document":
        return cls(
            doc_id=record["doc_id"],
            source_url=record["source_url"],
            title=record["title"],
            body=record["body"],
            word_count=int(record["word_count"]),
            split=record.get("split", "unassigned"),
        )


@dataclass
class SplitSpec:
    """Split sizes plus the shuffle seed; leftovers stay unassigned."""

    train: int
    validation: int
    test: int
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} count must be >= 0")


def count_words(text: str) -> int:
    """Words are maximal runs separated by Unicode whitespace."""
    return len(text.split())


def normalize_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _decode_entities(text: str) -> str:
    # Iterate to a fixed point so double-escaped entities (&amp;nbsp;)
    # resolve layer by layer. Bounded: each pass strictly shrinks or stops.
    for _ in range(8):
        decoded = text
        for entity, char in _ENTITIES.items():
            decoded = decoded.replace(entity, char)
        if decoded == text:
            break
        text = decoded
    return text


def strip_html(raw: str) -> str:
    text = _COMMENT.sub(" ", raw)
    text = _SCRIPT_STYLE.sub(" ", text)
    text = _TAG.sub(" ", text)
    text = _decode_entities(text)
    text = _TAG.sub(" ", text)
    return text


def ingest_raw(
    raw: bytes | str,
    source_url: str,
    doc_id: str | None = None,
    title: str = "",
    fmt: str = "plain",
    min_words: int = 20,
) -> Document:
    """Build a normalized Document from raw text or HTML.

    Raises EmptyBody when the normalized body has fewer than min_words words.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    if fmt not in ("plain", "html"):
        raise ValueError(f"unknown format {fmt!r}")
    text = strip_html(raw) if fmt == "html" else raw
    body = normalize_whitespace(text)
    wc = count_words(body)
    if wc < min_words:
        raise EmptyBody(f"{source_url}: body has {wc} words, minimum is {min_words}")
    if doc_id is None:
        doc_id = hashlib.sha256(source_url.encode("utf-8")).hexdigest()[:16]
    return Document(doc_id=doc_id, source_url=source_url, title=title,
                    body=body, word_count=wc)


def ingest_file(path: str | Path, fmt: str = "plain", min_words: int = 20,
                url_prefix: str = "file://") -> Document:
    path = Path(path)
    raw = path.read_bytes()
    return ingest_raw(
        raw,
        source_url=url_prefix + path.name,
        doc_id=path.stem,
        title=path.stem.replace("_", " ").replace("-", " "),
        fmt=fmt,
        min_words=min_words,
    )


def _shuffle_key(seed: int, doc_id: str) -> str:
    return hashlib.sha256(f"{seed}:{doc_id}".encode("utf-8")).hexdigest()


def assign_splits(docs: Sequence[Document], spec: SplitSpec) -> list[Document]:
    """Deterministically partition docs into train/validation/test by seed.

    The shuffle orders documents by sha256(seed, doc_id), so the same
    (docs, spec) pair always yields the same assignment regardless of the
    input order. Returns new Document values; the inputs are not mutated.
    """
    total = spec.train + spec.validation + spec.test
    if total > len(docs):
        raise CountOverflow(
            f"split sizes sum to {total} but corpus has {len(docs)} documents")
    seen = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
    ordered = sorted(docs, key=lambda d: (_shuffle_key(spec.seed, d.doc_id), d.doc_id))
    out = []
    for i, doc in enumerate(ordered):
        if i < spec.train:
            split = "train"
        elif i < spec.train + spec.validation:
            split = "validation"
        elif i < total:
            split = "test"
        else:
            split = "unassigned"
        out.append(Document(doc_id=doc.doc_id, source_url=doc.source_url,
                            title=doc.title, body=doc.body,
                            word_count=doc.word_count, split=split))
    return out


def split_counts(docs: Iterable[Document]) -> dict[str, int]:
    counts = {name: 0 for name in SPLITS}
    for doc in docs:
        counts[doc.split] += 1
    return counts
