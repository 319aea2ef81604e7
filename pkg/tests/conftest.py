from __future__ import annotations

import pytest

from critval.dataset import (
    DIMS,
    AgentType,
    ConversationRecord,
    Converted,
    Dataset,
    TrustProxy,
    TrustStage,
    builtin_phase1,
    phase1_analysis_view,
)


def make_record(rid, scores, outcome, agent="human", chrono=0, message_count=None):
    if isinstance(outcome, str):
        outcome = TrustProxy(TrustStage(outcome))
    elif isinstance(outcome, (bool, int)):
        outcome = Converted(bool(outcome))
    return ConversationRecord(rid, AgentType(agent), dict(zip(DIMS, scores)), outcome,
                              message_count, chrono)


def make_dataset(rows, provenance="test"):
    """rows: (id, scores, outcome) triples; chrono_index follows row order."""
    return Dataset(tuple(make_record(rid, sc, out, chrono=i) for i, (rid, sc, out) in enumerate(rows)),
                   None, provenance)


@pytest.fixture(scope="session")
def phase1():
    return builtin_phase1()


@pytest.fixture(scope="session")
def phase1_view(phase1):
    return phase1_analysis_view(phase1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
