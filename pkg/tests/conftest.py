"""Shared pytest wiring: the acceptance scoreboard.

Acceptance tests append one verdict line each; the terminal summary prints
them after the run so the scoreboard survives output capturing.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
