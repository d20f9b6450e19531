import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("qfit", deadline=None, max_examples=40)
settings.load_profile("qfit")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Log one acceptance line: ``record(number, title, passed, detail)``."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _record(number, title, passed, detail=""):
        lines.append((number, f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} {detail}".rstrip()))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
