import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""
    lines = request.config.stash[_LINES]

    def record(ac: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} AC{ac}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][2:].rstrip(":"))):
            terminalreporter.write_line(line)
