import pytest

RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one numbered acceptance criterion.

    Usage: ``criterion(n, checks)`` with ``checks`` a list of
    ``(description, ok)`` pairs; the test then asserts every check.
    """
    store = request.config.stash[RESULTS]

    def record(number: int, checks: list[tuple[str, bool]]):
        ok = all(flag for _, flag in checks)
        failed = [text for text, flag in checks if not flag]
        detail = "; ".join(text for text, _ in checks)
        store[number] = (ok, detail)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        assert ok, "failed: " + "; ".join(failed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        ok, detail = store[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
