from __future__ import annotations

import functools
import math

import numpy as np
import pytest
from hypothesis import settings

from rydpulse.metrics import ProtocolSetup
from rydpulse.protocols import (
    GATE3_OMEGA1,
    SBS_OMEGA_EFF,
    TRIANGLE_OMEGA,
    TRIANGLE_OMEGA_EFF,
    FAST_OMEGA,
    GateParams,
    default_sbs,
    default_triangle,
)

settings.register_profile("rydpulse", deadline=None, max_examples=40)
settings.load_profile("rydpulse")

TWO_PI = 2.0 * math.pi
V0 = TWO_PI * 260.0
IDEAL_V = 1e6  # in units of delta

# delta (rad/us) of each protocol's default run
GATE_DELTA = TWO_PI * 3.25 / GATE3_OMEGA1
SBS_DELTA = TWO_PI * 1.0 / SBS_OMEGA_EFF
TRIANGLE_DELTA = TWO_PI * 1.0 / TRIANGLE_OMEGA_EFF
FAST_DELTA = TWO_PI * (TRIANGLE_OMEGA / TRIANGLE_OMEGA_EFF) / FAST_OMEGA


def make_setup(protocol: str, v: float = V0) -> ProtocolSetup:
    if protocol == "gate3":
        return ProtocolSetup("gate3", GateParams.gate3(GATE_DELTA, v))
    if protocol == "gate2":
        return ProtocolSetup("gate2", GateParams.gate2(GATE_DELTA, v))
    if protocol == "sbs":
        return ProtocolSetup("sbs", default_sbs(SBS_DELTA, v))
    if protocol == "triangle":
        return ProtocolSetup("triangle", default_triangle(TRIANGLE_DELTA, v))
    if protocol == "triangle_fast":
        return ProtocolSetup("triangle_fast", default_triangle(FAST_DELTA, v, fast=True))
    raise ValueError(protocol)


@functools.lru_cache(maxsize=None)
def nominal_report(protocol: str):
    """Default report at V0 with Rydberg times, shared across tests."""
    return make_setup(protocol).run(trajectories=True)


@pytest.fixture(scope="session")
def reports():
    return nominal_report


def assert_close_angle(a: float, b: float, tol: float) -> None:
    assert abs(math.remainder(a - b, TWO_PI)) <= tol, (a, b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --------------------------------------------------------------------------
# acceptance report

ACCEPTANCE: dict[int, dict] = {}


def record(criterion: int, title: str, check: str, value: str, ok: bool, known: bool = False) -> bool:
    """Log one acceptance check; ``known`` marks an expected, documented miss."""
    entry = ACCEPTANCE.setdefault(criterion, {"title": title, "checks": []})
    entry["checks"].append((check, value, bool(ok), known))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[n]
        checks = entry["checks"]
        failed = [c for c in checks if not c[2]]
        known = sum(1 for c in failed if c[3])
        status = "PASS" if not failed else "FAIL"
        note = f" ({known} known deviation{'s' if known != 1 else ''})" if known else ""
        tr.write_line(f"{status} {n}: {entry['title']} [{len(checks) - len(failed)}/{len(checks)} checks]{note}")
        for check, value, ok, is_known in checks:
            mark = "ok  " if ok else ("XFAIL" if is_known else "FAIL")
            tr.write_line(f"    {mark} {check}: {value}")
