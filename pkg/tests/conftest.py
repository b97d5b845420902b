"""Shared pytest wiring.

The acceptance tests record one verdict line each; echoing them from the
terminal-summary hook keeps the table visible under default capture.
"""

verdict_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if verdict_lines:
        terminalreporter.section("acceptance verdicts")
        for line in verdict_lines:
            terminalreporter.write_line(line)
