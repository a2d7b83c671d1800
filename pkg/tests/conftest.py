import numpy as np
import pytest

from src.channel.dmc import bsc, z_channel
from src.infotheory.pmf import Pmf, Variable
from src.source.source import dsbs
from src.utils.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def two_bits():
    return (Variable("A", 2), Variable("B", 2))


@pytest.fixture
def random_pmf():
    """A generic full-support joint pmf over three small variables."""
    g = make_rng(99)
    variables = (Variable("A", 2), Variable("B", 3), Variable("C", 2))
    return Pmf.from_counts(variables, g.random((2, 3, 2)) + 0.05)


@pytest.fixture
def source():
    return dsbs(0.2)


@pytest.fixture
def channels():
    return bsc(0.1), z_channel(0.3)
