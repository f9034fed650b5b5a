import numpy as np
import pytest

import tiltedwalk as tw


@pytest.fixture(scope="session")
def two_state():
    """The 2-state benchmark chain: states (+1, -1), tilt parameter ln 2."""
    return tw.MarkovModel([1.0, -1.0], [[0.8, 0.2], [0.6, 0.4]], [0.75, 0.25])


@pytest.fixture(scope="session")
def two_state_tilt(two_state):
    return tw.solve_tilt(two_state)


@pytest.fixture(scope="session")
def iid_chain():
    """Chain with identical rows: increments +-1 i.i.d. with probs 3/4, 1/4."""
    return tw.MarkovModel(
        [1.0, -1.0], [[0.75, 0.25], [0.75, 0.25]], [0.75, 0.25]
    )


@pytest.fixture(scope="session")
def gauss_iid():
    return tw.GaussianModel(1.0, 1.0, tw.IID())


@pytest.fixture(scope="session")
def gauss_ar1():
    return tw.GaussianModel(1.0, 1.0, tw.AR1(0.5))


@pytest.fixture(scope="session")
def gauss_ma():
    return tw.GaussianModel(1.0, 1.0, tw.MA((1.0,)))


def random_markov_model(seed: int, n_states: int) -> tw.MarkovModel:
    """Valid chain with mixed-sign states and positive drift (None if the
    draw cannot be oriented)."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(n_states, 2.0), size=n_states)
    states = np.sort(rng.uniform(-2.0, 3.0, size=n_states))
    if np.unique(states).size != n_states:
        return None
    _, pi, _ = tw.perron(P)
    model = tw.MarkovModel(states, P, pi)
    drift = model.drift
    if abs(drift) < 0.05:
        return None
    if drift < 0:
        states = -states[::-1]
        P = P[::-1, ::-1]
        pi = pi[::-1]
        model = tw.MarkovModel(states, P, pi)
    if model.states.min() >= 0:
        return None
    return model if not tw.validate(model) else None
