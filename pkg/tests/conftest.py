"""Shared pytest hooks for the suite."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Prints one PASS/FAIL line per end-to-end check in test_acceptance."""
    rows = {}
    for status, word in (("passed", "PASS"), ("failed", "FAIL"),
                         ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            if status == "passed" and getattr(rep, "when", "call") != "call":
                continue
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                # a failed call beats an earlier passed setup
                if rows.get(name) != "FAIL":
                    rows[name] = word
    if rows:
        terminalreporter.write_sep("=", "acceptance summary")
        for name in sorted(rows):
            terminalreporter.write_line(f"{rows[name]}  {name}")
