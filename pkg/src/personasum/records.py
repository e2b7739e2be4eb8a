"""Line-record persistence: one self-describing JSON object per line.

Every artifact the pipeline writes (documents, summaries, annotations,
reports) goes through this module so that files stay byte-reproducible:
keys are sorted and floats round-trip through repr.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from personasum import PersonasumError


class MalformedLine(PersonasumError):
    """A line in a record file failed to parse; carries the 1-based line number."""

    def __init__(self, path: str | Path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


def dump_line(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def write_records(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records one per line, returning the count written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dump_line(record))
            fh.write("\n")
            n += 1
    return n


def append_record(path: str | Path, record: dict[str, Any], fsync: bool = False) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dump_line(record))
        fh.write("\n")
        fh.flush()
        if fsync:
            os.fsync(fh.fileno())


def iter_records(path: str | Path) -> Iterator[dict[str, Any]]:
    """Yield one dict per non-blank line; malformed lines raise with their line number."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                value = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(value, dict):
                raise MalformedLine(path, line_no, "record is not an object")
            yield value


def read_records(path: str | Path) -> list[dict[str, Any]]:
    return list(iter_records(path))


def write_atomic(path: str | Path, text: str) -> None:
    """Write a whole file via a temp file and rename, so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_dataclasses(path: str | Path, factory: Callable[[dict[str, Any]], Any]) -> list[Any]:
    """Read records and construct typed values, re-raising bad fields as MalformedLine."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                value = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(value, dict):
                raise MalformedLine(path, line_no, "record is not an object")
            try:
                out.append(factory(value))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedLine(path, line_no, str(exc)) from exc
    return out
