"""Collects the acceptance criteria outcomes and prints one line per criterion."""

import re

_RESULTS = {}
_TITLES = {
    1: "gate exactness",
    2: "spectral displacement oracle",
    3: "dimension axiom",
    4: "degree of truth, N=1",
    5: "sandwich of bound streams",
    6: "automata exactness",
    7: "approximation checker",
    8: "elementary equivalence oracle",
    9: "interpretation reduction",
    10: "determinism across workers",
}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        prev = _RESULTS.get(k)
        if prev is None or prev[0] == "PASS":
            _RESULTS[k] = ("PASS" if report.outcome == "passed" else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        status, secs = _RESULTS[k]
        terminalreporter.write_line(f"AC{k:<2} {status}  {_TITLES.get(k, '')} ({secs:.1f} s)")
