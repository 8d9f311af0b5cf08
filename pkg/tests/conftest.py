import json
from pathlib import Path

import numpy as np
import pytest

from mixlab import suspension as sp
from mixlab.gibbs_markov import doubling_map, lsv_first_return

FROZEN = Path(__file__).parent / "frozen" / "oracles.json"


@pytest.fixture(scope="session")
def oracles():
    return json.loads(FROZEN.read_text())


@pytest.fixture(scope="session")
def doubling():
    return doubling_map()


@pytest.fixture(scope="session")
def lsv():
    return lsv_first_return(0.5, 200)


@pytest.fixture(scope="session")
def lsv_flow(lsv):
    gm, tab = lsv
    return sp.make_suspension(gm, sp.induced_roof(1.0, gm, tab))


@pytest.fixture(scope="session")
def doubling_flow(doubling):
    return sp.make_suspension(doubling, sp.ConstantRoof(1.0))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
