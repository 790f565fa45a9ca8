import numpy as np
import pytest

from mmwave_cellfree import ScenarioConfig
from mmwave_cellfree.harness import drop_gains, power_model_for

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def desk_cfg():
    """Desk-scale network used across the suite."""
    return ScenarioConfig(num_aps=20, num_ms=4, n_ap=8, n_ms=4, mux_order=1, uc_cluster_size=2, drops=10)


@pytest.fixture
def small_cfg():
    return ScenarioConfig(num_aps=6, num_ms=3, n_ap=8, n_ms=4, drops=2, master_seed=11)


@pytest.fixture
def uc_gains(small_cfg):
    gains, assoc, pre = drop_gains(small_cfg, 0, "uc-fd-perfect-uni")
    return gains, assoc


@pytest.fixture
def cf_gains(small_cfg):
    gains, assoc, pre = drop_gains(small_cfg, 0, "cf-fd-perfect-uni")
    return gains, assoc


@pytest.fixture
def basic_model(small_cfg):
    return power_model_for(small_cfg, "basic")


def random_feasible(rng, mask, pmax=1.0, interior=False):
    """Random allocation inside {eta >= 0, per-AP sum <= pmax} on the association."""
    raw = rng.random(mask.shape) + (0.05 if interior else 0.0)
    raw = raw * mask
    scale = rng.random((mask.shape[0], 1)) * pmax / np.maximum(raw.sum(axis=1, keepdims=True), 1e-300)
    return raw * scale
