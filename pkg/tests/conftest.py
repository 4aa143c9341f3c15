import pytest

from fedadm.mdp import Mdp, enumerate_states
from fedadm.model import default_config


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def space(config):
    return enumerate_states(config)


@pytest.fixture(scope="session")
def mdp(config, space):
    m = Mdp(config, space)
    m.tables()
    return m
