import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from awfnet.data import DatasetSpec, generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def tiny_spec():
    return DatasetSpec(num_samples=80, image_size=(16, 16), seed=0)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec):
    return generate_synthetic(tiny_spec)


TINY_OPTIONS = {"stem-channels": "8,16", "blocks": "1", "epochs": "2", "num-samples": "80",
                "image-size": "16"}


@pytest.fixture
def tiny_options():
    return dict(TINY_OPTIONS)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
