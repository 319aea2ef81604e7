"""Funnel-stage detection, trust trajectories, the Trust Gate and rejection tiers."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .composite import BehaviorSignals
from .dataset import DatasetError, Message, Role, Transcript, TrustStage
from .lexicon import DEFAULT_RULES


class RuleError(ValueError):
    def __init__(self, rule_id: str, reason: str):
        super().__init__(f"rule {rule_id}: {reason}")
        self.rule_id = rule_id


class GateError(ValueError):
    pass


class FunnelStage(IntEnum):
    F1 = 1
    F2 = 2
    F3 = 3
    F4 = 4
    F5 = 5
    F6 = 6

    @property
    def title(self) -> str:
        return _STAGE_TITLES[self]

    @classmethod
    def parse(cls, text: str) -> "FunnelStage":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown funnel stage {text!r}") from None


_STAGE_TITLES = {
    FunnelStage.F1: "Rapport",
    FunnelStage.F2: "Need Elicitation",
    FunnelStage.F3: "Pain Point Activation",
    FunnelStage.F4: "Product Introduction",
    FunnelStage.F5: "Objection Handling",
    FunnelStage.F6: "Closing",
}


class RejectionTier(IntEnum):
    SOFT = 1
    HARD = 2
    TERMINAL = 3


@dataclass(frozen=True)
class Rule:
    id: str
    kind: str
    pattern: str
    case_fold: bool = True
    _rx: re.Pattern | None = field(default=None, compare=False, repr=False)

    @classmethod
    def build(cls, rule_id: str, spec, case_fold: bool = True) -> "Rule":
        if isinstance(spec, str):
            spec = {"kind": "keyword", "pattern": spec}
        kind = str(spec.get("kind", "keyword")).lower()
        pattern = spec.get("pattern")
        if not isinstance(pattern, str) or not pattern:
            raise RuleError(rule_id, "missing pattern")
        if kind == "keyword":
            rx = re.compile(re.escape(pattern), re.IGNORECASE if case_fold else 0)
        elif kind == "regex":
            try:
                rx = re.compile(pattern, re.IGNORECASE if case_fold else 0)
            except re.error as exc:
                raise RuleError(rule_id, f"bad regular expression ({exc})") from None
        else:
            raise RuleError(rule_id, f"unknown rule kind {kind!r}")
        return cls(rule_id, kind, pattern, case_fold, rx)

    def matches(self, text: str) -> bool:
        return self._rx.search(text) is not None


def _build_rules(prefix: str, specs, case_fold: bool) -> tuple[Rule, ...]:
    if not isinstance(specs, list):
        raise RuleError(prefix, "expected a list of rules")
    return tuple(Rule.build(f"{prefix}[{i}]", s, case_fold) for i, s in enumerate(specs))


@dataclass(frozen=True)
class StageRuleSet:
    stages: Mapping[FunnelStage, tuple[Rule, ...]]
    default_stage: FunnelStage = FunnelStage.F1

    def classify(self, text: str) -> FunnelStage:
        # most specific stage first; first matching rule wins
        for stage in sorted(self.stages, reverse=True):
            for rule in self.stages[stage]:
                if rule.matches(text):
                    return stage
        return self.default_stage


@dataclass(frozen=True)
class RejectionRules:
    terminal: tuple[Rule, ...] = ()
    hard: tuple[Rule, ...] = ()
    soft: tuple[Rule, ...] = ()


@dataclass(frozen=True)
class RuleBook:
    stages: StageRuleSet
    rejections: RejectionRules
    links: tuple[Rule, ...]

    @classmethod
    def from_dict(cls, obj: dict) -> "RuleBook":
        if not isinstance(obj, dict):
            raise RuleError("<root>", "rule file must hold a JSON object")
        fold = bool(obj.get("case_fold", True))
        raw_stages = obj.get("stages")
        if not isinstance(raw_stages, dict):
            raise RuleError("stages", "missing 'stages' object")
        stages = {}
        for key, specs in raw_stages.items():
            try:
                stage = FunnelStage.parse(key)
            except ValueError as exc:
                raise RuleError(f"stages.{key}", str(exc)) from None
            stages[stage] = _build_rules(stage.name, specs, fold)
        for stage in FunnelStage:
            if not stages.get(stage):
                raise RuleError(stage.name, "every stage needs at least one rule")
        rej = obj.get("rejections", {}) or {}
        rejections = RejectionRules(
            _build_rules("terminal", rej.get("terminal", []), fold),
            _build_rules("hard", rej.get("hard", []), fold),
            _build_rules("soft", rej.get("soft", []), fold),
        )
        links = _build_rules("links", obj.get("links", []), fold)
        default = FunnelStage.parse(obj.get("default_stage", "F1"))
        return cls(StageRuleSet(stages, default), rejections, links)

    @classmethod
    def load(cls, path) -> "RuleBook":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise RuleError(str(path), f"cannot read rule file ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise RuleError(str(path), f"invalid JSON ({exc.msg})") from None
        return cls.from_dict(obj)

    @classmethod
    def default(cls) -> "RuleBook":
        return cls.from_dict(DEFAULT_RULES)


# ---------------------------------------------------------------------------
# stage detection

@dataclass(frozen=True)
class FunnelAnnotation:
    transcript_id: str
    agent_type: str
    stages: tuple[tuple[int, FunnelStage], ...]
    message_count: int

    @property
    def agent_message_count(self) -> int:
        return len(self.stages)

    @property
    def transitions(self) -> int:
        seq = [s for _, s in self.stages]
        return sum(1 for a, b in zip(seq, seq[1:]) if a != b)

    @property
    def max_stage(self) -> FunnelStage | None:
        return max((s for _, s in self.stages), default=None)

    @property
    def f6_messages(self) -> int:
        return sum(1 for _, s in self.stages if s is FunnelStage.F6)

    def to_dict(self) -> dict:
        return {"id": self.transcript_id, "agent_type": self.agent_type,
                "stages": [[i, s.name] for i, s in self.stages],
                "transitions": self.transitions,
                "max_stage": self.max_stage.name if self.max_stage else None,
                "f6_messages": self.f6_messages}


def detect_stages(t: Transcript, rules: RuleBook | StageRuleSet) -> FunnelAnnotation:
    stage_rules = rules.stages if isinstance(rules, RuleBook) else rules
    if not t.messages:
        raise ValueError(f"transcript {t.id!r} is empty")
    stages = tuple((i, stage_rules.classify(m.text)) for i, m in t.agent_messages())
    return FunnelAnnotation(t.id, t.agent_type.value, stages, len(t.messages))


# ---------------------------------------------------------------------------
# rejections and behavior signals

def classify_rejection(message: Message, rules: RuleBook | RejectionRules) -> RejectionTier | None:
    tiers = rules.rejections if isinstance(rules, RuleBook) else rules
    if message.role is not Role.USER:
        raise ValueError("rejection tiers apply to user messages only")
    for tier, tier_rules in ((RejectionTier.TERMINAL, tiers.terminal),
                             (RejectionTier.HARD, tiers.hard),
                             (RejectionTier.SOFT, tiers.soft)):
        if any(r.matches(message.text) for r in tier_rules):
            return tier
    return None


_URL = re.compile(r"https?://\S+|www\.\S+", re.IGNORECASE)


def normalize_message(text: str) -> str:
    text = _URL.sub("", text.lower())
    return " ".join(text.split())


def _is_link(m: Message, links: Sequence[Rule]) -> bool:
    if m.contains_purchase_link is not None:
        return m.contains_purchase_link
    return any(r.matches(m.text) for r in links)


def _longest_day_run(days: set) -> int:
    ordinals = {d.toordinal() for d in days}
    best = 0
    for o in ordinals:
        if o - 1 in ordinals:
            continue
        run = 1
        while o + run in ordinals:
            run += 1
        best = max(best, run)
    return best


def behavior_signals(t: Transcript, rules: RuleBook) -> BehaviorSignals:
    if not t.messages:
        raise ValueError(f"transcript {t.id!r} is empty")
    rejections = 0
    continued = False
    for m in t.messages:
        if m.role is Role.USER:
            if classify_rejection(m, rules) is not None:
                rejections += 1
        elif rejections > 0 and _is_link(m, rules.links):
            continued = True
    days_by_text: dict[str, set] = defaultdict(set)
    for m in t.messages:
        if m.role is Role.AGENT and m.timestamp is not None:
            days_by_text[normalize_message(m.text)].add(m.timestamp.date())
    streak = max((_longest_day_run(days) for days in days_by_text.values()), default=0)
    agent = [m for m in t.messages if m.role is Role.AGENT]
    every_link = bool(agent) and all(_is_link(m, rules.links) for m in agent)
    return BehaviorSignals(rejections, continued, streak, every_link)


# ---------------------------------------------------------------------------
# trust trajectories and the gate

@dataclass(frozen=True)
class TrustTrajectory:
    id: str
    checkpoints: tuple[tuple[int, TrustStage], ...]

    def __post_init__(self):
        idx = [i for i, _ in self.checkpoints]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"trajectory {self.id!r}: message indices must strictly increase")
        if idx and idx[0] < 0:
            raise ValueError(f"trajectory {self.id!r}: negative message index")

    @property
    def final(self) -> TrustStage | None:
        return self.checkpoints[-1][1] if self.checkpoints else None

    def stage_at(self, msg_index: int) -> TrustStage | None:
        current = None
        for i, stage in self.checkpoints:
            if i > msg_index:
                break
            current = stage
        return current


def load_trajectories(path) -> dict[str, TrustTrajectory]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            cps = tuple((int(c["msg_index"]), TrustStage.parse(c["stage"]))
                        for c in obj.get("checkpoints", []))
            traj = TrustTrajectory(str(obj["id"]), cps)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {lineno}: bad trajectory ({exc})") from None
        out[traj.id] = traj
    return out


@dataclass(frozen=True)
class TrustGatePolicy:
    # None stands for "no verified trust yet" (before the first checkpoint)
    max_stage: Mapping[TrustStage | None, FunnelStage]

    def permitted_max(self, trust: TrustStage | None) -> FunnelStage:
        if trust is TrustStage.T6:
            raise GateError("T6 (trust collapse) is outside the gate; handle it upstream")
        return self.max_stage[trust]


DEFAULT_GATE = TrustGatePolicy({
    None: FunnelStage.F1,
    TrustStage.T0: FunnelStage.F1,
    TrustStage.T1: FunnelStage.F2,
    TrustStage.T2: FunnelStage.F4,
    TrustStage.T3: FunnelStage.F5,
    TrustStage.T4: FunnelStage.F6,
    TrustStage.T5: FunnelStage.F6,
})


def gate_permitted(trust: TrustStage | None, attempted: FunnelStage,
                   policy: TrustGatePolicy = DEFAULT_GATE) -> bool:
    return attempted <= policy.permitted_max(trust)


@dataclass(frozen=True)
class GateViolation:
    msg_index: int
    trust: TrustStage | None
    attempted: FunnelStage
    permitted_max: FunnelStage

    def to_dict(self) -> dict:
        return {"msg_index": self.msg_index, "trust": self.trust.value if self.trust else "below_T1",
                "attempted": self.attempted.name, "permitted_max": self.permitted_max.name}


def gate_audit(annotation: FunnelAnnotation, trajectory: TrustTrajectory,
               policy: TrustGatePolicy = DEFAULT_GATE) -> list[GateViolation]:
    """Gate violations per agent message.

    Trust at a message is the latest checkpoint at or before it. Messages
    sent while the user is in T6 are not audited.
    """
    for i, _ in trajectory.checkpoints:
        if i >= annotation.message_count:
            raise GateError(f"checkpoint at message {i} outside transcript of "
                            f"{annotation.message_count} messages")
    out = []
    for idx, stage in annotation.stages:
        trust = trajectory.stage_at(idx)
        if trust is TrustStage.T6:
            continue
        if not gate_permitted(trust, stage, policy):
            out.append(GateViolation(idx, trust, stage, policy.permitted_max(trust)))
    return out


# ---------------------------------------------------------------------------
# desynchronization summary

@dataclass(frozen=True)
class GroupMetrics:
    n: int
    mean_transitions: float
    f6_reach_rate: float
    mean_f6_messages: float

    def to_dict(self) -> dict:
        return {"n": self.n, "mean_transitions": self.mean_transitions,
                "f6_reach_rate": self.f6_reach_rate, "mean_f6_messages": self.mean_f6_messages}


@dataclass(frozen=True)
class DesyncSummary:
    groups: Mapping[str, GroupMetrics]
    # rows F1..F6 (max funnel stage), columns T0..T6 (final trust)
    matrix: tuple[tuple[int, ...], ...] | None

    def to_dict(self) -> dict:
        return {"groups": {k: v.to_dict() for k, v in self.groups.items()},
                "matrix": None if self.matrix is None else {
                    "rows": [s.name for s in FunnelStage],
                    "cols": [t.value for t in TrustStage],
                    "counts": [list(r) for r in self.matrix]}}


def desync_matrix(annotations: Mapping[str, FunnelAnnotation],
                  trust_finals: Mapping[str, TrustStage] | None = None) -> DesyncSummary:
    if trust_finals is not None and set(annotations) != set(trust_finals):
        missing = sorted(set(annotations) ^ set(trust_finals))
        raise ValueError(f"annotation / trust ids do not align: {missing}")
    by_group: dict[str, list[FunnelAnnotation]] = defaultdict(list)
    for key in sorted(annotations):
        by_group[annotations[key].agent_type].append(annotations[key])
    groups = {}
    for name in sorted(by_group):
        anns = by_group[name]
        n = len(anns)
        groups[name] = GroupMetrics(
            n,
            sum(a.transitions for a in anns) / n,
            sum(1 for a in anns if a.max_stage is FunnelStage.F6) / n,
            sum(a.f6_messages for a in anns) / n,
        )
    matrix = None
    if trust_finals is not None:
        counts = [[0] * len(TrustStage) for _ in FunnelStage]
        cols = list(TrustStage)
        for key in sorted(annotations):
            top = annotations[key].max_stage
            final = trust_finals[key]
            if top is None or final is None:
                continue
            counts[top - 1][cols.index(final)] += 1
        matrix = tuple(tuple(r) for r in counts)
    return DesyncSummary(groups, matrix)


def annotate_all(transcripts: Iterable[Transcript], rules: RuleBook) -> dict[str, FunnelAnnotation]:
    return {t.id: detect_stages(t, rules) for t in sorted(transcripts, key=lambda t: t.id)}
