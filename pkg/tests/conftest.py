import numpy as np
import pytest

from privsketch.hashing import make_hash_family


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def family():
    return make_hash_family(4, 128, 42)


def random_users(rng, n, d, max_len):
    """Random set-valued users over ``[0, d)`` (empty sets allowed)."""
    users = []
    for _ in range(n):
        size = int(rng.integers(0, max_len + 1))
        users.append(np.unique(rng.integers(0, d, size=size)))
    return users


# name -> (passed, detail); filled by test_acceptance.py, printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(name: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[name] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
