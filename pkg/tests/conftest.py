import numpy as np
import pytest

from qlab.mdp import Mdp, make_baird, make_random_mdp


@pytest.fixture
def baird():
    return make_baird()


@pytest.fixture
def small_mdp():
    return make_random_mdp(3, 3, 2, 0.9)


def one_state_mdp(reward=1.0, gamma=0.5, n_actions=1):
    return Mdp(
        np.ones((1, n_actions, 1)),
        np.full((1, n_actions), reward),
        gamma,
        np.ones(1),
    )
