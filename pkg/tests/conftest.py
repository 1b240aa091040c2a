import re

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and (rep.when == "call" or outcome == "error"):
                detail = dict(rep.user_properties).get("detail", "")
                lines.append((int(m.group(1)), "PASS" if outcome == "passed" else "FAIL", detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, status, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {num}: {status}  {detail}".rstrip())
