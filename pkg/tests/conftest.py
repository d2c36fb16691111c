"""Shared fixtures: the acceptance-criteria reporter and the headline
experiment run that several acceptance checks measure.

The reporter collects one line per acceptance criterion and prints the
collected block after the test summary, so a full `pytest` run ends with
an explicit PASS/FAIL verdict per criterion regardless of how the
individual tests interleave.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import pytest


@dataclass
class AcceptanceReporter:
    lines: dict[int, str] = field(default_factory=dict)

    def record(self, criterion: int, passed: bool, detail: str) -> None:
        mark = "PASS" if passed else "FAIL"
        self.lines[criterion] = f"ACCEPTANCE {criterion}: {mark} - {detail}"


_REPORTER = AcceptanceReporter()


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceReporter:
    return _REPORTER


def pytest_terminal_summary(terminalreporter) -> None:
    if not _REPORTER.lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_REPORTER.lines):
        terminalreporter.write_line(_REPORTER.lines[n])


@dataclass
class HeadlineRun:
    """The rate-separation testbed shared by acceptance criteria 2 and 3."""

    result: object
    problem: object
    elapsed: float


@pytest.fixture(scope="session")
def headline_run() -> HeadlineRun:
    """Quadratic d=20, additive noise sigma=0.1, decaying schedule with
    s*l = 10, 100 trials to k = 1e5; accel (p=20), sg, and sgm (beta=0.9,
    alpha grid-searched). Thread count does not affect outputs (that is
    itself an acceptance criterion), so this uses 8 workers for speed.
    """
    from polygrad.objectives import initial_point, make_quadratic
    from polygrad.runner import MethodSpec, RunSettings, run_experiment
    from polygrad.schedules import DecaySchedule

    problem = make_quadratic(dim=20, l=0.5, L=1.0, data_seed=11, sigma=0.1)
    x0 = initial_point(problem, data_seed=11, radius=1.0)
    schedule = DecaySchedule.make(20.0, problem.constants)
    methods = [
        MethodSpec(method="accel", p=20.0),
        MethodSpec(method="sg"),
        MethodSpec(method="sgm", beta=0.9),
    ]
    settings = RunSettings(
        n_trials=100,
        max_k=100_000,
        base_seed=0,
        snapshots=True,
        rate_window=(1e3, 1e5),
    )
    t0 = time.monotonic()
    result = run_experiment(problem, x0, schedule, methods, settings, threads=8)
    return HeadlineRun(result=result, problem=problem, elapsed=time.monotonic() - t0)
