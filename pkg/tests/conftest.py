import os

import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (passed, detail)
    print("criterion %s: %s  %s" % (number, "PASS" if passed else "FAIL", detail))


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Instance bundles with their references, shared across the session.

    ``ASGARD_CACHE`` points this at a persistent directory instead.
    """
    env = os.environ.get("ASGARD_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("instances"))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA, key=str):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line("criterion %s: %s  %s" % (n, "PASS" if passed else "FAIL", detail))
