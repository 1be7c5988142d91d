import numpy as np
import pytest

from ifwaves.model import ModelParams
from ifwaves.solver import solve_wave, wave_family


@pytest.fixture(scope="session")
def params_nominal():
    return ModelParams()


@pytest.fixture(scope="session")
def family_beta10():
    """Nested wave family m = 1..6 at beta = 10."""
    return wave_family(ModelParams(beta=10.0), 6)


@pytest.fixture(scope="session")
def family_beta45():
    """Nested wave family m = 1..5 at beta = 4.5."""
    return wave_family(ModelParams(beta=4.5), 5)


@pytest.fixture(scope="session")
def tw3_beta16(family_beta10):
    """The 3-spike wave walked from beta = 10 up to 16."""
    wave = family_beta10[3].wave
    rec = family_beta10[3]
    for b in np.linspace(10.5, 16.0, 12):
        rec = solve_wave(3, wave, ModelParams(beta=float(b)))
        wave = rec.wave
    return rec
