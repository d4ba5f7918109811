from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple


HEADER_KIND = "header"


def _encode(record: Dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, allow_nan=False) + "\n"


def write_records(
    path: str | Path,
    records: Iterable[Dict[str, Any]],
    header: Optional[Dict[str, Any]] = None,
) -> int:
    """Write a JSONL record stream, `header` first as a `kind="header"` record.

    Returns the number of body records written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        if header is not None:
            f.write(_encode({"kind": HEADER_KIND, **header}))
        for record in records:
            f.write(_encode(record))
            count += 1
    return count


def iter_records(path: str | Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, record); blank lines are skipped."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON record: {e.msg}") from e
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{line_no}: expected a JSON object, got {type(record).__name__}")
            yield line_no, record


def read_records(path: str | Path, header: bool = False) -> Tuple[Optional[Dict[str, Any]], List[Dict[str, Any]]]:
    """Return (header, body records); with `header=False` the header slot is None."""
    records = [record for _, record in iter_records(path)]
    if not header:
        return None, records
    if not records or records[0].get("kind") != HEADER_KIND:
        raise ValueError(f"{path}: record stream does not start with a header record")
    head = dict(records[0])
    head.pop("kind")
    return head, records[1:]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def short_hash(text: str | bytes, n: int = 16) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()[:n]


def write_json(path: str | Path, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in {path} (line {e.lineno}): {e.msg}") from e


def write_csv(
    path: str | Path,
    rows: Sequence[Dict[str, Any]],
    fieldnames: Sequence[str],
    comments: Optional[Dict[str, Any]] = None,
) -> None:
    """Write rows with a header; `comments` go first as `# key=value` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        for key, value in sorted((comments or {}).items()):
            f.write(f"# {key}={value}\n")
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in fieldnames})


def read_csv(path: str | Path) -> tuple[Dict[str, str], List[Dict[str, str]]]:
    """Return (comment metadata, rows) for a file written by `write_csv`."""
    path = Path(path)
    meta: Dict[str, str] = {}
    with path.open("r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    body: List[str] = []
    for line in lines:
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            body.append(line)
    if not body:
        raise ValueError(f"Missing CSV header in {path}")
    rows = list(csv.DictReader(body))
    return meta, rows


def _csv_cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value
