from pathlib import Path

import numpy as np
import pytest

from nomaisac.scenario import ScenarioConfig, SolverConfig, generate_channels
from nomaisac.schemes import Beamspace

REPO = Path(__file__).resolve().parents[1]
PAPER_CONFIG = REPO / "configs" / "paper.json"

_CRITERIA: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    X = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return X @ X.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def paper_scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def solver_config():
    return SolverConfig()


@pytest.fixture(scope="session")
def space(paper_scenario):
    return Beamspace.from_config(paper_scenario)


@pytest.fixture(scope="session")
def channels(paper_scenario):
    return generate_channels(paper_scenario, seed=42, realization_index=0)
