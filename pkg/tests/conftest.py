import numpy as np
import pytest

from pgce.envs import load_mdp
from pgce.numerics import init_params

FIXTURE_GAMMA = 0.9


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_mdp():
    return load_mdp("builtin:fixture_2s2a")


@pytest.fixture(scope="session")
def fixture_params(fixture_mdp):
    return init_params((fixture_mdp.num_states, 8, fixture_mdp.num_actions), 3)


@pytest.fixture(scope="session")
def bandit_mdp():
    return load_mdp("builtin:bandit")


def reference_forward(params, x):
    """Plain-loop forward pass, written independently of the kernels."""
    h = list(np.asarray(x, dtype=float))
    p = 0
    layout = params.layout
    v = params.values
    for layer, (fi, fo) in enumerate(zip(layout[:-1], layout[1:])):
        out = []
        for j in range(fo):
            s = 0.0
            for i in range(fi):
                s += v[p + j * fi + i] * h[i]
            out.append(s)
        p += fi * fo
        out = [o + v[p + j] for j, o in enumerate(out)]
        p += fo
        if layer < len(layout) - 2:
            out = [max(0.0, o) for o in out]
        h = out
    return np.array(h)
