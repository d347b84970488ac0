"""Line-delimited JSON helpers shared by the dataset and CLI modules."""

from __future__ import annotations

import json
from pathlib import Path


class FormatError(ValueError):
    """A JSONL file (or one of its records) is malformed."""


def read_jsonl(path) -> list[dict]:
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise FormatError(f"{path}:{lineno}: expected an object, got {type(rec).__name__}")
        records.append(rec)
    return records


def write_jsonl(path, records) -> None:
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
