"""Collects acceptance verdicts and prints them as one line each at the end of the run."""

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[name] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
