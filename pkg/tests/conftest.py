"""Collects the one-line acceptance verdicts and reprints them after the run,
so they are visible even when pytest captures per-test stdout."""

ACCEPT_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPT_LINES,
                           key=lambda s: int(s.split(":")[0].rsplit("C", 1)[1])):
            terminalreporter.write_line(line)
