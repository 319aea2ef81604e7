"""Domain data model, record/transcript file IO and the built-in pilot fixture."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Union


class DatasetError(ValueError):
    """Raised when a records or transcript file cannot be turned into a Dataset."""


class TrustCollapseError(ValueError):
    """Raised when a T6 (post-purchase collapse) stage reaches an ordinal analysis."""


class Dim(str, Enum):
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    D5 = "D5"
    D6 = "D6"
    D7 = "D7"

    @property
    def title(self) -> str:
        return _DIM_TITLES[self]

    @property
    def index(self) -> int:
        return int(self.value[1]) - 1

    def __lt__(self, other):
        if not isinstance(other, Dim):
            return NotImplemented
        return self.index < other.index

    @classmethod
    def parse(cls, text: str) -> "Dim":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown dimension {text!r}") from None


_DIM_TITLES = {
    Dim.D1: "Need Elicitation",
    Dim.D2: "Emotional Empathy",
    Dim.D3: "Pacing Strategy",
    Dim.D4: "Objection Handling",
    Dim.D5: "Contextual Memory",
    Dim.D6: "Product Accuracy",
    Dim.D7: "Brand Consistency",
}

DIMS: tuple[Dim, ...] = tuple(Dim)

# N/A is represented by None inside score maps.
NA = None
_NA_TOKENS = {"", "NA", "N/A"}


class TrustStage(str, Enum):
    T0 = "T0"
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"
    T6 = "T6"

    @property
    def ordinal(self) -> int:
        if self is TrustStage.T6:
            raise TrustCollapseError("T6 (trust collapse) has no ordinal; exclude it first")
        return int(self.value[1])

    @property
    def title(self) -> str:
        return _TRUST_INFO[self][0]

    @property
    def indicator(self) -> str:
        return _TRUST_INFO[self][1]

    @property
    def avg_messages(self) -> float | None:
        # descriptive corpus metadata only
        return _TRUST_INFO[self][2]

    @classmethod
    def parse(cls, text: str) -> "TrustStage":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown trust stage {text!r}") from None


_TRUST_INFO = {
    TrustStage.T0: ("No Trust", "User ignores or rejects all contact", None),
    TrustStage.T1: ("Platform Credible", "User responds, begins basic interaction", 4.9),
    TrustStage.T2: ("Agent Helpful", "User proactively shares personal info", 12.6),
    TrustStage.T3: ("Success Evidence", "User believes platform can deliver", 10.8),
    TrustStage.T4: ("My Child Can Match", "User discusses specific requirements", 23.3),
    TrustStage.T5: ("Price Reasonable", "User enters purchase discussion", 36.4),
    TrustStage.T6: ("Trust Collapse", "Post-purchase trust breakdown", None),
}


class AgentType(str, Enum):
    HUMAN = "human"
    AI = "ai"

    @classmethod
    def parse(cls, text: str) -> "AgentType":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown agent type {text!r}") from None


class Role(str, Enum):
    AGENT = "agent"
    USER = "user"


@dataclass(frozen=True)
class TrustProxy:
    stage: TrustStage


@dataclass(frozen=True)
class Converted:
    flag: bool


Outcome = Union[TrustProxy, Converted]


def outcome_kind(outcome: Outcome) -> str:
    return "trust" if isinstance(outcome, TrustProxy) else "converted"


@dataclass(frozen=True)
class ConversationRecord:
    id: str
    agent_type: AgentType
    scores: Mapping[Dim, int | None]
    outcome: Outcome
    message_count: int | None = None
    chrono_index: int = 0
    phase_tag: str = ""

    def score(self, dim: Dim) -> int | None:
        return self.scores.get(dim)


@dataclass(frozen=True)
class Message:
    role: Role
    text: str
    timestamp: datetime | None = None
    contains_purchase_link: bool | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("message text is empty")


@dataclass(frozen=True)
class Transcript:
    id: str
    agent_type: AgentType
    messages: tuple[Message, ...]

    def agent_messages(self) -> list[tuple[int, Message]]:
        return [(i, m) for i, m in enumerate(self.messages) if m.role is Role.AGENT]


@dataclass(frozen=True)
class Dataset:
    records: tuple[ConversationRecord, ...]
    transcripts: Mapping[str, Transcript] | None = None
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def get(self, record_id: str) -> ConversationRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    @property
    def outcome_kind(self) -> str | None:
        kinds = {outcome_kind(r.outcome) for r in self.records}
        if len(kinds) > 1:
            raise DatasetError("dataset mixes trust-proxy and converted outcomes")
        return kinds.pop() if kinds else None

    def filter(self, keep) -> "Dataset":
        return replace(self, records=tuple(r for r in self.records if keep(r)))

    def chronological(self) -> list[ConversationRecord]:
        return sorted(self.records, key=lambda r: r.chrono_index)


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    severity: str = "error"
    record_id: str | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def add(self, code, message, severity="error", record_id=None):
        self.findings.append(Finding(code, message, severity, record_id))

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self):
        return len(self.findings)

    def __bool__(self):
        return bool(self.findings)


def validate(d: Dataset) -> ValidationReport:
    report = ValidationReport()
    seen_ids: set[str] = set()
    seen_chrono: dict[int, str] = {}
    kinds = set()
    for r in d.records:
        if r.id in seen_ids:
            report.add("duplicate_id", f"duplicate id {r.id!r}", record_id=r.id)
        seen_ids.add(r.id)
        if r.chrono_index in seen_chrono:
            report.add("duplicate_chrono_index",
                       f"chrono_index {r.chrono_index} shared with {seen_chrono[r.chrono_index]!r}",
                       record_id=r.id)
        else:
            seen_chrono[r.chrono_index] = r.id
        if r.chrono_index < 0:
            report.add("negative_chrono_index", "chrono_index must be >= 0", record_id=r.id)
        if r.message_count is not None and r.message_count < 0:
            report.add("negative_message_count", "message_count must be >= 0", record_id=r.id)
        for dim in DIMS:
            if dim not in r.scores:
                report.add("dimension_absent", f"dimension absent: {dim.value}", record_id=r.id)
                continue
            v = r.scores[dim]
            if v is not None and (isinstance(v, bool) or v not in (1, 2, 3, 4, 5)):
                report.add("score_out_of_range", f"{dim.value} score {v!r} not in 1..5", record_id=r.id)
        extra = set(r.scores) - set(DIMS)
        if extra:
            report.add("unknown_dimension", f"unknown dimensions {sorted(map(str, extra))}", record_id=r.id)
        kinds.add(outcome_kind(r.outcome))
    if len(kinds) > 1:
        report.add("mixed_outcomes", "dataset mixes trust-proxy and converted outcomes")
    if d.transcripts:
        for tid in d.transcripts:
            if tid not in seen_ids:
                report.add("orphan_transcript", f"transcript {tid!r} has no matching record",
                           severity="warning", record_id=tid)
    return report


def deal_flag(r: ConversationRecord) -> bool:
    """Binary deal indicator: T5 counts as a deal under the trust proxy."""
    if isinstance(r.outcome, Converted):
        return bool(r.outcome.flag)
    if r.outcome.stage is TrustStage.T6:
        raise TrustCollapseError(f"record {r.id} is T6; filter with phase1_analysis_view first")
    return r.outcome.stage is TrustStage.T5


def outcome_value(r: ConversationRecord) -> int:
    """Numeric outcome used by correlation analyses: TL ordinal 0..5, or 0/1."""
    if isinstance(r.outcome, Converted):
        return int(r.outcome.flag)
    return r.outcome.stage.ordinal


def phase1_analysis_view(d: Dataset) -> Dataset:
    if d.records and d.outcome_kind != "trust":
        raise DatasetError("phase1_analysis_view needs trust-proxy outcomes")
    return d.filter(lambda r: r.outcome.stage is not TrustStage.T6)


def excluded_by_view(d: Dataset) -> list[str]:
    return [r.id for r in d.records
            if isinstance(r.outcome, TrustProxy) and r.outcome.stage is TrustStage.T6]


# ---------------------------------------------------------------------------
# cell parsing

def parse_score(cell) -> int | None:
    if cell is None:
        return None
    if isinstance(cell, bool):
        raise ValueError(f"score {cell!r} not in 1..5")
    if isinstance(cell, int):
        v = cell
    else:
        text = str(cell).strip()
        if text.upper() in _NA_TOKENS:
            return None
        if not re.fullmatch(r"[+-]?\d+", text):
            raise ValueError(f"score {text!r} is not an integer or NA")
        v = int(text)
    if v not in (1, 2, 3, 4, 5):
        raise ValueError(f"score {v} not in 1..5")
    return v


def parse_outcome(cell) -> Outcome:
    if isinstance(cell, bool):
        return Converted(cell)
    if isinstance(cell, int):
        if cell in (0, 1):
            return Converted(bool(cell))
        raise ValueError(f"outcome {cell!r} must be 0/1 or T0..T6")
    text = str(cell).strip()
    if text in ("0", "1"):
        return Converted(text == "1")
    if text.lower() in ("true", "false"):
        return Converted(text.lower() == "true")
    return TrustProxy(TrustStage.parse(text))


def format_outcome(outcome: Outcome) -> str:
    if isinstance(outcome, TrustProxy):
        return outcome.stage.value
    return "1" if outcome.flag else "0"


def _format_score(v: int | None) -> str:
    return "NA" if v is None else str(v)


def _parse_count(cell, what: str) -> int | None:
    if cell is None:
        return None
    if isinstance(cell, int) and not isinstance(cell, bool):
        return cell
    text = str(cell).strip()
    if text == "" or text.upper() in _NA_TOKENS:
        return None
    if not re.fullmatch(r"\d+", text):
        raise ValueError(f"{what} {text!r} is not a non-negative integer")
    return int(text)


# ---------------------------------------------------------------------------
# records IO

CSV_COLUMNS = ["id", "agent_type", "d1", "d2", "d3", "d4", "d5", "d6", "d7",
               "outcome", "message_count", "chrono_index"]
_REQUIRED_CSV = ["id", "agent_type", "d1", "d2", "d3", "d4", "d5", "d6", "d7", "outcome"]


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
        if fmt not in ("csv", "jsonl"):
            raise DatasetError(f"unsupported format {fmt!r}")
        return fmt
    return "jsonl" if path.suffix.lower() in (".jsonl", ".json", ".ndjson") else "csv"


def _finish(records: list[ConversationRecord], provenance: str) -> Dataset:
    d = Dataset(tuple(records), None, provenance)
    report = validate(d)
    if not report.ok:
        msgs = "; ".join(f"{f.record_id or '-'}: {f.message}" for f in report.errors)
        raise DatasetError(msgs)
    return d


def load_records(path, format: str | None = None) -> Dataset:
    path = Path(path)
    fmt = _infer_format(path, format)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    records = _parse_csv(text) if fmt == "csv" else _parse_jsonl(text)
    return _finish(records, str(path))


def records_from_csv_text(text: str, provenance: str = "<string>") -> Dataset:
    return _finish(_parse_csv(text), provenance)


def _parse_csv(text: str) -> list[ConversationRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        return []
    missing = [c for c in _REQUIRED_CSV if c not in header]
    if missing:
        raise DatasetError(f"header missing columns: {', '.join(missing)}")
    col = {name: i for i, name in enumerate(header)}
    has_chrono = "chrono_index" in col
    records = []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"row {rowno}: expected {len(header)} cells, got {len(row)}")
        current = "id"
        try:
            rid = row[col["id"]].strip()
            if not rid:
                raise ValueError("empty id")
            current = "agent_type"
            agent = AgentType.parse(row[col["agent_type"]])
            scores = {}
            for dim in DIMS:
                current = dim.value.lower()
                scores[dim] = parse_score(row[col[current]])
            current = "outcome"
            outcome = parse_outcome(row[col["outcome"]])
            current = "message_count"
            mc = _parse_count(row[col["message_count"]], "message_count") if "message_count" in col else None
            current = "chrono_index"
            chrono = _parse_count(row[col["chrono_index"]], "chrono_index") if has_chrono else None
            if chrono is None:
                chrono = len(records)
            phase = row[col["phase_tag"]].strip() if "phase_tag" in col else ""
        except ValueError as exc:
            raise DatasetError(f"row {rowno}, column {current}: {exc}") from None
        records.append(ConversationRecord(rid, agent, scores, outcome, mc, chrono, phase))
    return records


def _parse_jsonl(text: str) -> list[ConversationRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        current = "<line>"
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            current = "id"
            rid = str(obj["id"])
            current = "agent_type"
            agent = AgentType.parse(obj["agent_type"])
            current = "scores"
            raw_scores = obj["scores"]
            if not isinstance(raw_scores, dict):
                raise ValueError("scores must be an object")
            scores = {}
            for key, cell in raw_scores.items():
                current = f"scores.{key}"
                scores[Dim.parse(key)] = parse_score(cell)
            current = "outcome"
            outcome = parse_outcome(obj["outcome"])
            current = "message_count"
            mc = _parse_count(obj.get("message_count"), "message_count")
            current = "chrono_index"
            chrono = _parse_count(obj.get("chrono_index"), "chrono_index")
            if chrono is None:
                chrono = len(records)
            phase = str(obj.get("phase_tag", "") or "")
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        except KeyError as exc:
            raise DatasetError(f"line {lineno}, field {exc.args[0]}: missing") from None
        except ValueError as exc:
            raise DatasetError(f"line {lineno}, field {current}: {exc}") from None
        records.append(ConversationRecord(rid, agent, scores, outcome, mc, chrono, phase))
    return records


def record_to_json(r: ConversationRecord) -> dict:
    outcome = r.outcome.stage.value if isinstance(r.outcome, TrustProxy) else int(r.outcome.flag)
    return {
        "id": r.id,
        "agent_type": r.agent_type.value,
        "scores": {d.value: r.scores.get(d) if r.scores.get(d) is not None else "NA"
                   for d in DIMS if d in r.scores},
        "outcome": outcome,
        "message_count": r.message_count,
        "chrono_index": r.chrono_index,
        "phase_tag": r.phase_tag,
    }


def dumps_records(d: Dataset | Iterable[ConversationRecord], format: str = "csv") -> str:
    records = d.records if isinstance(d, Dataset) else tuple(d)
    if format == "jsonl":
        return "".join(json.dumps(record_to_json(r), ensure_ascii=False) + "\n" for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + ["phase_tag"])
    for r in records:
        w.writerow([r.id, r.agent_type.value]
                   + [_format_score(r.scores.get(dim)) for dim in DIMS]
                   + [format_outcome(r.outcome),
                      "" if r.message_count is None else r.message_count,
                      r.chrono_index, r.phase_tag])
    return buf.getvalue()


def write_records(d: Dataset, path, format: str | None = None) -> Path:
    path = Path(path)
    fmt = _infer_format(path, format)
    path.write_text(dumps_records(d, fmt), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# transcripts IO

def _parse_timestamp(text):
    if text is None or text == "":
        return None
    text = str(text).strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def transcript_from_json(obj: dict) -> Transcript:
    messages = []
    for i, m in enumerate(obj.get("messages", [])):
        role = Role(str(m["role"]).strip().lower())
        link = m.get("contains_purchase_link")
        messages.append(Message(role, str(m["text"]), _parse_timestamp(m.get("timestamp")),
                                None if link is None else bool(link)))
    return Transcript(str(obj["id"]), AgentType.parse(obj.get("agent_type", "ai")), tuple(messages))


def load_transcripts(path) -> dict[str, Transcript]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    out: dict[str, Transcript] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            t = transcript_from_json(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"line {lineno}: bad transcript ({exc})") from None
        if t.id in out:
            raise DatasetError(f"line {lineno}: duplicate transcript id {t.id!r}")
        out[t.id] = t
    return out


def transcript_to_json(t: Transcript) -> dict:
    msgs = []
    for m in t.messages:
        item = {"role": m.role.value, "text": m.text}
        if m.timestamp is not None:
            item["timestamp"] = m.timestamp.isoformat()
        if m.contains_purchase_link is not None:
            item["contains_purchase_link"] = m.contains_purchase_link
        msgs.append(item)
    return {"id": t.id, "agent_type": t.agent_type.value, "messages": msgs}


def attach_transcripts(d: Dataset, transcripts: Mapping[str, Transcript]) -> Dataset:
    return replace(d, transcripts=dict(transcripts))


# ---------------------------------------------------------------------------
# built-in pilot fixture: 15 scored conversations, v2.0 / v2.1 totals and TL stage

PHASE1_TABLE = """\
id,src,d1,d2,d3,d4,d5,d6,d7,v20,v21,tl
H1,Human,3,3,3,4,4,5,3,3.45,3.35,T3
H2,Human,1,1,2,1,2,2,2,1.45,1.75,T6
H3,Human,3,2,2,2,3,3,2,2.40,2.25,T5
H4,Human,2,2,2,2,2,3,3,2.15,2.25,T5
H5,Human,3,3,3,3,2,3,3,2.90,3.00,T5
A1,AI,1,1,1,1,2,2,2,1.25,1.15,T1
A2,AI,3,3,2,3,2,3,3,2.70,2.55,T3
A3,AI,4,4,3,4,4,4,4,3.80,3.50,T3
A4,AI,3,3,1,2,5,2,2,2.50,1.60,T1
A5,AI,3,3,2,3,5,3,4,3.05,2.65,T3
A6,AI,3,3,1,3,5,3,3,2.80,1.95,T2
A7,AI,3,2,1,1,3,4,2,2.15,1.85,T0
A8,AI,3,2,2,2,4,3,3,2.55,2.40,T1
A9,AI,3,2,1,2,3,4,2,2.30,1.90,T2
A10,AI,4,3,2,3,4,3,3,3.10,2.55,T4
"""

PHASE1_TABLE_SHA256 = "d4e0ad75ba2d326adfb0213bc0bc187bc1b8cb65e895bb814131e665ea1dd6ac"


def phase1_table_rows() -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(PHASE1_TABLE)))


def phase1_table_checksum() -> str:
    return hashlib.sha256(PHASE1_TABLE.encode("utf-8")).hexdigest()


def phase1_reference_totals() -> dict[str, tuple[str, str]]:
    """Reference (v2.0, v2.1) totals per id, kept as printed strings."""
    return {row["id"]: (row["v20"], row["v21"]) for row in phase1_table_rows()}


def builtin_phase1() -> Dataset:
    if phase1_table_checksum() != PHASE1_TABLE_SHA256:
        raise DatasetError("built-in fixture checksum mismatch")
    records = []
    for i, row in enumerate(phase1_table_rows()):
        scores = {dim: parse_score(row[dim.value.lower()]) for dim in DIMS}
        records.append(ConversationRecord(
            id=row["id"],
            agent_type=AgentType.parse(row["src"]),
            scores=scores,
            outcome=TrustProxy(TrustStage.parse(row["tl"])),
            message_count=None,
            chrono_index=i,
            phase_tag="phase1",
        ))
    return Dataset(tuple(records), None, "builtin:phase1")
