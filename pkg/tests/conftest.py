"""Shared pytest plumbing.

The acceptance tests register their verdicts here so the run always ends
with one human-readable line per criterion, whatever order pytest chose.
"""

_CRITERIA: dict = {}


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    """Store one criterion verdict for the end-of-run summary block."""
    _CRITERIA[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[number]
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number}: {verdict} - {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
