"""Deterministic report emission: JSON, markdown tables, CSV and provenance."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import __version__


def _plain(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k.value if isinstance(k, Enum) else k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Fraction):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _plain(obj.item())
    return obj


def dumps_json(obj: Any) -> str:
    """Canonical JSON: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def fmt3(v: Any) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, float, Fraction)):
        f = float(v)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return str(v) if isinstance(v, int) else f"{f:.3f}"
    return str(v)


def markdown_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    for row in rows:
        lines.append("| " + " | ".join(fmt3(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def csv_text(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    for row in rows:
        w.writerow(["" if c is None else (repr(float(c)) if isinstance(c, (float, Fraction)) else c)
                    for c in row])
    return buf.getvalue()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(inputs: Mapping[str, str], config: Mapping[str, Any]) -> dict:
    """Input hashes (name -> sha256), the echoed config and the toolkit version.

    No timestamps, so identical runs yield identical bytes.
    """
    return {"toolkit": "critval", "version": __version__,
            "inputs": dict(sorted(inputs.items())), "config": _plain(dict(config))}


def write_bundle(out_dir, stem: str, payload: Mapping[str, Any],
                 markdown: str | None, csv_body: str | None, formats: Sequence[str]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / f"{stem}.json"
        p.write_text(dumps_json(payload), encoding="utf-8")
        written.append(p)
    if "md" in formats and markdown is not None:
        p = out / f"{stem}.md"
        p.write_text(markdown, encoding="utf-8")
        written.append(p)
    if "csv" in formats and csv_body is not None:
        p = out / f"{stem}.csv"
        p.write_text(csv_body, encoding="utf-8")
        written.append(p)
    return written
