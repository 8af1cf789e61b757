import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from precond.domains import builtin_schema, example_corpus  # noqa: E402
from precond.synth import build_pool  # noqa: E402
from precond.trajectory import parse_corpus  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def restaurants():
    return builtin_schema("restaurants")


@pytest.fixture(scope="session")
def buses():
    return builtin_schema("buses")


@pytest.fixture(scope="session")
def household():
    return builtin_schema("household")


@pytest.fixture(scope="session")
def restaurants_example():
    return example_corpus("restaurants")


@pytest.fixture(scope="session")
def household_example():
    return example_corpus("household")


@pytest.fixture(scope="session")
def inform_demos(restaurants):
    return parse_corpus(FIXTURES / "inform_demos.traj", restaurants)


@pytest.fixture(scope="session")
def inform_pool(restaurants):
    lines = [l for l in (FIXTURES / "inform_pool.txt").read_text().splitlines() if l.strip()]
    return build_pool("system.INFORM", lines, restaurants)


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
