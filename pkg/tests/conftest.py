import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the one-line-per-criterion acceptance table after the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(results):
        label, ok, detail = results[num]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {num:02d} {label}: {detail}")
