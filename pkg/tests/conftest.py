import logging
import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from unitrans.adapters import ToyExtractor, ToyGenerator, ToyImageEncoder, ToyTextEncoder  # noqa: E402
from unitrans.domain_stats import collect_stats  # noqa: E402

ACCEPTANCE_LINES: list[str] = []

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy():
    return {
        "generator": ToyGenerator(),
        "image_encoder": ToyImageEncoder(),
        "text_encoder": ToyTextEncoder(),
        "extractor": ToyExtractor(),
    }


@pytest.fixture(scope="session")
def toy_stats(toy):
    return collect_stats(toy["generator"], toy["image_encoder"], n=5000, seed=0, domain_name="toy")


@pytest.fixture(scope="session")
def source_generator():
    """A sibling toy domain that plays the role of the source."""
    return ToyGenerator(seed=1)


@pytest.fixture(autouse=True)
def _quiet_clamp_warnings():
    logging.getLogger("unitrans.mapper").setLevel(logging.ERROR)
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
