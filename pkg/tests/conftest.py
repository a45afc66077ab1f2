"""Collects the acceptance verdicts and prints them after the test run."""

ACCEPTANCE_LINES = {}


def record(criterion, results):
    """Store one line per criterion summarising its checks."""
    results = list(results)
    ok = all(r.passed for r in results)
    parts = "; ".join(r.line()[5:] for r in results)
    ACCEPTANCE_LINES[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {parts}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
