import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent))

from bilinvfa.benchmarks import m2, random_mdp  # noqa: E402
from bilinvfa.features import FeatureBasis  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FROZEN = json.loads((Path(__file__).parent / "fixtures" / "frozen_values.json").read_text())


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@pytest.fixture
def mdp_m2():
    return m2()


@pytest.fixture
def mdp_r4():
    return random_mdp(4, 2, seed=3)


@pytest.fixture
def basis_r4():
    return FeatureBasis(np.array(FROZEN["r4_basis"]))


@st.composite
def small_mdps(draw, max_states=5, max_actions=3):
    """Random MDPs through the package generator, seeded by hypothesis."""
    n_states = draw(st.integers(1, max_states))
    n_actions = draw(st.integers(1, max_actions))
    seed = draw(st.integers(0, 2**31 - 1))
    gamma = draw(st.sampled_from([0.0, 0.5, 0.9, 0.95]))
    sparsity = draw(st.sampled_from([0.0, 0.5]))
    return random_mdp(n_states, n_actions, seed=seed, sparsity=sparsity, gamma=gamma)


def random_basis(n_states, n_extra, rng):
    """Constant column plus ``n_extra`` standard-normal columns."""
    cols = [np.ones(n_states)] + [rng.normal(size=n_states) for _ in range(n_extra)]
    return FeatureBasis(np.column_stack(cols))


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
