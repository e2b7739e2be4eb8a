"""Annotation service: task queue, append-only label store, agreement reporting.

Annotators see blinded tasks (no origins, no true personas). Labels are
appended to a JSON-lines log whose derived index is rewritten atomically;
replaying the log reconstructs the full progress state, including any
adjudication tasks spawned by quorum disagreements.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from personasum import PersonasumError
from personasum.agreement import (
    COMPARATIVE_BUCKETS,
    cohen_kappa,
    comparative_tally,
    persona_id_accuracy,
    quality_useful_pct,
)
from personasum.corpus import Document
from personasum.generation import PersonaSummary
from personasum.records import append_record, iter_records, write_atomic

TASK_KINDS = ("persona_id", "quality_check", "comparative")
COMPARATIVE_CHOICES = ("a_better", "both_good", "b_better", "both_bad")
QUALITY_FIELDS = ("relevant", "covers_key_points", "useful")
DEFAULT_QUORUM = 2
EXCERPT_CHARS = 600

STORE_ENV = "PERSONA_STORE"
PORT_ENV = "PERSONA_PORT"


class ServiceError(PersonasumError):
    pass


class UnknownTask(ServiceError):
    pass


class InvalidLabel(ServiceError):
    pass


class ConflictingLabel(ServiceError):
    """Same annotator, same task, different payload."""


def _stable_order(seed: int, task_id: str, items: Sequence[str]) -> list[int]:
    """Deterministic shuffle: indexes ordered by a keyed hash."""
    return sorted(range(len(items)),
                  key=lambda i: hashlib.sha256(
                      f"{seed}:{task_id}:{i}:{items[i]}".encode()).hexdigest())


@dataclass
class AnnotationTask:
    task_id: str
    kind: str
    doc_id: str
    payload: dict[str, Any]
    hidden: dict[str, Any] = field(default_factory=dict)
    adjudication_of: str | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")

    def public_view(self) -> dict[str, Any]:
        view = {"task_id": self.task_id, "kind": self.kind, "doc_id": self.doc_id}
        view.update(self.payload)
        if self.adjudication_of:
            view["adjudication_of"] = self.adjudication_of
        return view

    def to_record(self) -> dict[str, Any]:
        record = {"task_id": self.task_id, "kind": self.kind, "doc_id": self.doc_id,
                  "payload": self.payload, "hidden": self.hidden}
        if self.adjudication_of:
            record["adjudication_of"] = self.adjudication_of
        return record

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "AnnotationTask":
        return cls(task_id=record["task_id"], kind=record["kind"],
                   doc_id=record["doc_id"], payload=dict(record["payload"]),
                   hidden=dict(record.get("hidden", {})),
                   adjudication_of=record.get("adjudication_of"))


@dataclass
class AnnotationRecord:
    record_id: str
    annotator_id: str
    task_id: str
    doc_id: str
    task: str  # task kind
    payload: dict[str, Any]
    timestamp: float

    def to_record(self) -> dict[str, Any]:
        return {"record_id": self.record_id, "annotator_id": self.annotator_id,
                "task_id": self.task_id, "doc_id": self.doc_id, "task": self.task,
                "payload": self.payload, "timestamp": self.timestamp}

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "AnnotationRecord":
        return cls(record_id=record["record_id"], annotator_id=record["annotator_id"],
                   task_id=record["task_id"], doc_id=record["doc_id"],
                   task=record["task"], payload=dict(record["payload"]),
                   timestamp=float(record["timestamp"]))


# -- task builders -------------------------------------------------------


def _excerpt(doc: Document) -> str:
    body = doc.body
    return body[:EXCERPT_CHARS] + ("..." if len(body) > EXCERPT_CHARS else "")


def build_persona_id_tasks(documents: Mapping[str, Document],
                           summaries: Sequence[PersonaSummary],
                           seed: int = 0) -> list[AnnotationTask]:
    """One slot-matching task per document with a full persona set.

    Summaries are shuffled into slots deterministically per (seed, task);
    the slot-to-persona truth stays server-side.
    """
    by_doc: dict[str, list[PersonaSummary]] = {}
    for s in summaries:
        by_doc.setdefault(s.doc_id, []).append(s)
    tasks = []
    for doc_id in sorted(by_doc):
        group = sorted(by_doc[doc_id], key=lambda s: s.persona)
        personas = [s.persona for s in group]
        if len(group) < 2 or len(set(personas)) != len(group):
            continue
        if doc_id not in documents:
            continue
        task_id = f"pid-{doc_id}"
        order = _stable_order(seed, task_id, [s.persona for s in group])
        slots = {str(slot): group[i] for slot, i in enumerate(order)}
        tasks.append(AnnotationTask(
            task_id=task_id,
            kind="persona_id",
            doc_id=doc_id,
            payload={
                "doc_excerpt": _excerpt(documents[doc_id]),
                "slots": [{"slot": slot, "text": s.text}
                          for slot, s in sorted(slots.items())],
                "personas": sorted(personas),
            },
            hidden={"truth": {slot: s.persona for slot, s in slots.items()}},
        ))
    return tasks


def build_quality_tasks(documents: Mapping[str, Document],
                        summaries: Sequence[PersonaSummary]) -> list[AnnotationTask]:
    """One relevance/coverage/usefulness check per summary; origin stays hidden."""
    tasks = []
    for s in sorted(summaries, key=lambda s: s.key()):
        if s.doc_id not in documents:
            continue
        tasks.append(AnnotationTask(
            task_id=f"qc-{s.doc_id}-{s.persona.replace(' ', '_')}",
            kind="quality_check",
            doc_id=s.doc_id,
            payload={
                "doc_excerpt": _excerpt(documents[s.doc_id]),
                "persona": s.persona,
                "summary": s.text,
            },
            hidden={"origin": s.origin},
        ))
    return tasks


def build_comparative_tasks(documents: Mapping[str, Document],
                            finetuned: Sequence[PersonaSummary],
                            ground_truth: Sequence[PersonaSummary],
                            seed: int = 0) -> list[AnnotationTask]:
    """Blind A/B tasks pairing a fine-tuned summary with its reference."""
    ref_index = {(s.doc_id, s.persona): s for s in ground_truth}
    tasks = []
    for s in sorted(finetuned, key=lambda s: s.key()):
        ref = ref_index.get((s.doc_id, s.persona))
        if ref is None or s.doc_id not in documents:
            continue
        task_id = f"cmp-{s.doc_id}-{s.persona.replace(' ', '_')}"
        order = _stable_order(seed, task_id, ["finetuned", "ground_truth"])
        sides = [("finetuned", s.text), ("ground_truth", ref.text)]
        a_origin, a_text = sides[order[0]]
        b_origin, b_text = sides[order[1]]
        tasks.append(AnnotationTask(
            task_id=task_id,
            kind="comparative",
            doc_id=s.doc_id,
            payload={
                "doc_excerpt": _excerpt(documents[s.doc_id]),
                "persona": s.persona,
                "summary_a": a_text,
                "summary_b": b_text,
                "choices": list(COMPARATIVE_CHOICES),
            },
            hidden={"origins": {"a": a_origin, "b": b_origin}},
        ))
    return tasks


def write_tasks(path: str | Path, tasks: Sequence[AnnotationTask]) -> int:
    from personasum.records import write_records
    return write_records(path, [t.to_record() for t in tasks])


def load_tasks(path: str | Path) -> list[AnnotationTask]:
    return [AnnotationTask.from_record(r) for r in iter_records(path)]


# -- store ----------------------------------------------------------------


class AnnotationStore:
    """Append-only JSON-lines log with an atomically rewritten index sidecar."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.sidecar = Path(str(path) + ".idx")
        self._lock = threading.Lock()
        self.records: list[AnnotationRecord] = []
        if self.path.exists():
            self.records = [AnnotationRecord.from_record(r) for r in iter_records(self.path)]

    def append(self, record: AnnotationRecord) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            append_record(self.path, record.to_record(), fsync=True)
            self.records.append(record)
            self._write_index()

    def _write_index(self) -> None:
        by_task: dict[str, int] = {}
        for r in self.records:
            by_task[r.task_id] = by_task.get(r.task_id, 0) + 1
        write_atomic(self.sidecar, json.dumps(
            {"count": len(self.records), "by_task": by_task}, sort_keys=True))


# -- board ----------------------------------------------------------------


def _record_id(task_id: str, annotator_id: str) -> str:
    return hashlib.sha256(f"{task_id}|{annotator_id}".encode()).hexdigest()[:16]


def validate_payload(task: AnnotationTask, payload: Mapping[str, Any]) -> dict[str, Any]:
    """Check a label against its task shape; returns the canonical payload."""
    if task.kind == "persona_id":
        assignments = payload.get("assignments")
        if not isinstance(assignments, Mapping):
            raise InvalidLabel("persona_id label needs an 'assignments' mapping")
        slots = {s["slot"] for s in task.payload["slots"]}
        personas = task.payload["personas"]
        if set(assignments) != slots:
            raise InvalidLabel(f"assignments must cover slots {sorted(slots)}")
        values = list(assignments.values())
        if sorted(values) != sorted(personas):
            raise InvalidLabel(
                "assignments must use each persona exactly once (bijection)")
        return {"assignments": {k: assignments[k] for k in sorted(assignments)}}
    if task.kind == "quality_check":
        out = {}
        for field_name in QUALITY_FIELDS:
            value = payload.get(field_name)
            if not isinstance(value, bool):
                raise InvalidLabel(f"quality_check label needs boolean {field_name!r}")
            out[field_name] = value
        return out
    if task.kind == "comparative":
        choice = payload.get("choice")
        if choice not in COMPARATIVE_CHOICES:
            raise InvalidLabel(f"choice must be one of {COMPARATIVE_CHOICES}")
        origins = task.hidden.get("origins", {})
        verdict = resolve_comparative(choice, origins)
        out = {"choice": choice}
        if verdict:
            out["verdict"] = verdict
        return out
    raise InvalidLabel(f"unknown task kind {task.kind!r}")


def resolve_comparative(choice: str, origins: Mapping[str, str]) -> str | None:
    """Map the blinded A/B choice onto the origin-resolved bucket."""
    if choice == "both_good":
        return "both_good"
    if choice == "both_bad":
        return "both_bad"
    winner = origins.get("a" if choice == "a_better" else "b")
    if winner == "finetuned":
        return "finetuned_better"
    if winner == "ground_truth":
        return "ground_truth_better"
    return None


class TaskBoard:
    """Tasks plus their label state; adjudication tasks are derived from the log."""

    def __init__(self, tasks: Sequence[AnnotationTask], store: AnnotationStore,
                 quorum: int = DEFAULT_QUORUM):
        self.quorum = quorum
        self.store = store
        self._lock = threading.Lock()
        self.tasks: dict[str, AnnotationTask] = {}
        for task in tasks:
            if task.task_id in self.tasks:
                raise ServiceError(f"duplicate task id {task.task_id!r}")
            self.tasks[task.task_id] = task
        self.labels: dict[str, list[AnnotationRecord]] = {t: [] for t in self.tasks}
        for record in store.records:
            self._attach(record)

    # Replay and live submission share this path so state stays derivable.
    def _attach(self, record: AnnotationRecord) -> None:
        if record.task_id not in self.tasks:
            raise ServiceError(f"label for unknown task {record.task_id!r} in store")
        self.labels.setdefault(record.task_id, []).append(record)
        self._maybe_spawn_adjudication(record.task_id)

    def _maybe_spawn_adjudication(self, task_id: str) -> None:
        task = self.tasks[task_id]
        if task.adjudication_of is not None:
            return
        records = self.labels[task_id]
        if len(records) < self.quorum:
            return
        first = records[: self.quorum]
        if all(r.payload == first[0].payload for r in first[1:]):
            return
        adj_id = f"{task_id}-adj"
        if adj_id in self.tasks:
            return
        adj = AnnotationTask(task_id=adj_id, kind=task.kind, doc_id=task.doc_id,
                             payload=task.payload, hidden=task.hidden,
                             adjudication_of=task_id)
        self.tasks[adj_id] = adj
        self.labels[adj_id] = []

    def _quorum_for(self, task: AnnotationTask) -> int:
        return 1 if task.adjudication_of else self.quorum

    def is_done(self, task_id: str) -> bool:
        task = self.tasks[task_id]
        annotators = {r.annotator_id for r in self.labels[task_id]}
        return len(annotators) >= self._quorum_for(task)

    def next_task(self, annotator_id: str, kind: str | None = None) -> AnnotationTask | None:
        with self._lock:
            for task_id in sorted(self.tasks):
                task = self.tasks[task_id]
                if kind and task.kind != kind:
                    continue
                if self.is_done(task_id):
                    continue
                if any(r.annotator_id == annotator_id for r in self.labels[task_id]):
                    continue
                return task
            return None

    def submit(self, task_id: str, annotator_id: str,
               payload: Mapping[str, Any]) -> tuple[AnnotationRecord, bool]:
        """Validate and record a label; returns (record, created).

        A byte-identical resubmission is a no-op returning the original
        record; a different payload from the same annotator is a conflict.
        """
        if not annotator_id or not str(annotator_id).strip():
            raise InvalidLabel("annotator_id is required")
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"no task {task_id!r}")
            canonical = validate_payload(task, payload)
            for record in self.labels[task_id]:
                if record.annotator_id == annotator_id:
                    if record.payload == canonical:
                        return record, False
                    raise ConflictingLabel(
                        f"annotator {annotator_id!r} already labeled {task_id!r} differently")
            record = AnnotationRecord(
                record_id=_record_id(task_id, annotator_id),
                annotator_id=annotator_id,
                task_id=task_id,
                doc_id=task.doc_id,
                task=task.kind,
                payload=canonical,
                timestamp=time.time(),
            )
            self.store.append(record)
            self._attach(record)
            return record, True

    def progress(self) -> dict[str, Any]:
        with self._lock:
            by_kind: dict[str, dict[str, int]] = {}
            done = 0
            for task_id, task in self.tasks.items():
                stats = by_kind.setdefault(task.kind, {"total": 0, "done": 0, "open": 0})
                stats["total"] += 1
                if self.is_done(task_id):
                    stats["done"] += 1
                    done += 1
                else:
                    stats["open"] += 1
            return {
                "total": len(self.tasks),
                "done": done,
                "open": len(self.tasks) - done,
                "records": len(self.store.records),
                "by_kind": by_kind,
            }

    def agreement_report(self) -> dict[str, Any]:
        """Aggregate agreement statistics; kappa pools the first two raters per task."""
        with self._lock:
            report: dict[str, Any] = {"records": len(self.store.records)}
            pid_records = [r for r in self.store.records if r.task == "persona_id"]
            if pid_records:
                truth = {}
                for task in self.tasks.values():
                    if task.kind == "persona_id" and not task.adjudication_of:
                        truth[task.doc_id] = task.hidden.get("truth", {})
                triples = [(r.annotator_id, r.doc_id, r.payload["assignments"])
                           for r in pid_records]
                accuracy = persona_id_accuracy(triples, truth)
                entry: dict[str, Any] = {
                    "accuracy_pct": 100.0 * accuracy.pooled,
                    "per_annotator": {a: 100.0 * v
                                      for a, v in accuracy.per_annotator.items()},
                }
                kappa = self._pooled_kappa(
                    "persona_id",
                    lambda r: [f"{slot}={p}" for slot, p in
                               sorted(r.payload["assignments"].items())])
                if kappa is not None:
                    entry["kappa"] = kappa
                report["persona_id"] = entry
            quality_records = [r for r in self.store.records if r.task == "quality_check"]
            if quality_records:
                entry = {"useful_pct": quality_useful_pct(
                    [r.payload["useful"] for r in quality_records])}
                kappa = self._pooled_kappa("quality_check",
                                           lambda r: [str(r.payload["useful"])])
                if kappa is not None:
                    entry["kappa"] = kappa
                report["quality_check"] = entry
            comparative_records = [r for r in self.store.records if r.task == "comparative"]
            if comparative_records:
                verdicts = [r.payload["verdict"] for r in comparative_records
                            if "verdict" in r.payload]
                entry = {}
                if verdicts:
                    entry["tally_pct"] = comparative_tally(verdicts)
                kappa = self._pooled_kappa("comparative",
                                           lambda r: [r.payload["choice"]])
                if kappa is not None:
                    entry["kappa"] = kappa
                report["comparative"] = entry
            return report

    def _pooled_kappa(self, kind, items_of) -> float | None:
        a_labels: list[str] = []
        b_labels: list[str] = []
        for task_id in sorted(self.tasks):
            task = self.tasks[task_id]
            if task.kind != kind or task.adjudication_of:
                continue
            records = self.labels[task_id]
            if len(records) < 2:
                continue
            a_labels.extend(items_of(records[0]))
            b_labels.extend(items_of(records[1]))
        if not a_labels:
            return None
        return cohen_kappa(a_labels, b_labels)


# -- HTTP app --------------------------------------------------------------


def create_app(board: TaskBoard, static_dir: str | Path | None = None):
    """FastAPI app over a task board; static UI files mount at the root.

    fastapi must be imported at module scope: handler annotations are
    strings here and get resolved against this module's globals.
    """
    app = FastAPI(title="annotation service", docs_url=None, redoc_url=None)
    app.state.board = board

    @app.get("/api/tasks/next")
    def next_task(annotator: str = "", kind: str | None = None):
        if not annotator.strip():
            return JSONResponse({"detail": "annotator query parameter is required"},
                                status_code=400)
        if kind is not None and kind not in TASK_KINDS:
            return JSONResponse({"detail": f"unknown kind {kind!r}"}, status_code=400)
        task = board.next_task(annotator, kind)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task.public_view())

    @app.post("/api/tasks/{task_id}/label")
    async def label(task_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)
        annotator_id = body.get("annotator_id", "")
        payload = body.get("payload")
        if not isinstance(payload, dict):
            return JSONResponse({"detail": "payload object is required"}, status_code=400)
        try:
            record, created = board.submit(task_id, annotator_id, payload)
        except UnknownTask as exc:
            return JSONResponse({"detail": str(exc)}, status_code=404)
        except InvalidLabel as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        except ConflictingLabel as exc:
            return JSONResponse({"detail": str(exc)}, status_code=409)
        status = 201 if created else 200
        return JSONResponse({"record_id": record.record_id,
                             "status": "recorded" if created else "duplicate"},
                            status_code=status)

    @app.get("/api/progress")
    def progress():
        return JSONResponse(board.progress())

    @app.get("/api/report/agreement")
    def agreement():
        return JSONResponse(board.agreement_report())

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


class ServiceHandle:
    """Uvicorn server on a background thread, for tests and the serve command."""

    def __init__(self, app, host: str = "127.0.0.1", port: int = 8700):
        import uvicorn

        self.config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(self.config)
        self.thread: threading.Thread | None = None

    def start(self, timeout_s: float = 10.0) -> None:
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.monotonic() + timeout_s
        while not self.server.started:
            if time.monotonic() > deadline:
                raise ServiceError("service did not start in time")
            time.sleep(0.02)

    def stop(self) -> None:
        self.server.should_exit = True
        if self.thread:
            self.thread.join(timeout=10)
