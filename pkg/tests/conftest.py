import time

import numpy as np
import pytest

from amortclust.features import FeatureSpec
from amortclust.network import TrainConfig
from amortclust.pipeline import ExperimentConfig, obtain_network
from amortclust.scenarios import ScenarioConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scenario1_config(model_path, **kw) -> ExperimentConfig:
    """Desk-scale Scenario 1: n=20, K=2, T=500, ACF lags 1..3, 2000 x 10 training passes."""
    base = dict(seed=2024, scenario=ScenarioConfig(scenario=1, T=500, n=20, K=2),
                features=FeatureSpec("acf", (1, 2, 3)), train=TrainConfig(epochs=10),
                n_train=2000, n_eval=200, model_path=str(model_path))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="session")
def scenario1_model(tmp_path_factory):
    """(config, params, training seconds) for the desk-scale Scenario 1 network, trained once."""
    path = tmp_path_factory.mktemp("s1") / "model.ancl"
    cfg = scenario1_config(path)
    t0 = time.perf_counter()
    params, _ = obtain_network(cfg, None)
    return cfg, params, time.perf_counter() - t0


# criterion lines recorded by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
