"""
Pytest configuration and fixtures
"""

import os

import pytest

from bose_transport.model_core import ChainSpec, ReservoirSpec, SystemSpec
from db.base import init_database


def make_system(
    L: int = 5,
    M: int = 200,
    gamma: float = 0.1,
    beta: float = 10.0,
    epsilon: float = 0.4,
    nbar_left: float = 1.0,
    nbar_right: float = 0.1,
    delta: float = 0.0,
    U: float = 0.0,
    J_s: float = 1.0,
    J_r: float = 1.0,
    beta_right: float | None = None,
    gamma_right: float | None = None,
) -> SystemSpec:
    """SystemSpec with the reference parameters used throughout the tests"""
    return SystemSpec(
        chain=ChainSpec(L=L, J_s=J_s, delta=delta, U=U),
        left=ReservoirSpec(gamma=gamma, beta=beta, n_bar=nbar_left, M=M, J_r=J_r, side="left"),
        right=ReservoirSpec(gamma=gamma_right or gamma, beta=beta_right or beta, n_bar=nbar_right,
                            M=M, J_r=J_r, side="right"),
        epsilon=epsilon,
    )


@pytest.fixture
def system_factory():
    """Fixture to build SystemSpec instances with keyword overrides"""
    return make_system


@pytest.fixture
def small_system():
    """Short chain between small rings; cheap enough for every solver"""
    return make_system(L=3, M=20, gamma=0.5, beta=1.0, epsilon=0.4)


@pytest.fixture
def reference_config():
    """Configuration text with the parameters of the temperature/relaxation surface"""
    return """
# chain between two rings
chain.L = 5
chain.Js = 1.0
epsilon = 0.4

left.M = 200
left.gamma = 0.1
left.beta = 10
left.nbar = 1.0

right.M = 200
right.gamma = 0.1
right.beta = 10
right.nbar = 0.1

method = exact
seed = 7
"""


@pytest.fixture
def test_db(tmp_path):
    """SQLite result store in a temporary directory"""
    database = init_database(f"sqlite:///{os.path.join(tmp_path, 'grid.db')}")
    yield database
    database.dispose()
