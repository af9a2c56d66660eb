"""Echo the acceptance scoreboard after output capture is done with it."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "SCOREBOARD", []) if mod else []
    if lines:
        terminalreporter.section("acceptance scoreboard")
        for line in lines:
            terminalreporter.write_line(line)
