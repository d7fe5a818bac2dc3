import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance-gate verdict lines after the run summary.

    The gate tests print one pass/fail line each; default output capture
    hides those for passing tests, so the collected lines are echoed here.
    """
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", ()) if mod else ()
    if lines:
        terminalreporter.section("acceptance gate")
        for line in lines:
            terminalreporter.write_line(line)
