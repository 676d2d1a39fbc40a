"""Shared pytest plumbing: one pass/fail line per acceptance criterion."""

import re

_CRIT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")

_RANK = {"passed": 0, "skipped": 1, "failed": 2, "error": 2}


def pytest_terminal_summary(terminalreporter):
    worst = {}
    for status in ("passed", "skipped", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            m = _CRIT.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            num, label = int(m.group(1)), m.group(2)
            prev = worst.get(num)
            if prev is None or _RANK[status] > _RANK[prev[0]]:
                worst[num] = (status, label)
    if not worst:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(worst):
        status, label = worst[num]
        verdict = "PASS" if status == "passed" else "FAIL"
        if status == "skipped":
            verdict = "SKIP"
        terminalreporter.write_line(
            f"ACCEPTANCE {num} ({label.replace('_', ' ')}): {verdict}")
