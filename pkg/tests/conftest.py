import math

import numpy as np
import pytest

from slicedim import build_cantor_ifs, lebesgue_quadrature, natural_measure

MID_THIRDS_DIM = math.log(2) / math.log(3)


@pytest.fixture(scope="session")
def mid_thirds_ifs():
    return build_cantor_ifs(1, MID_THIRDS_DIM)


@pytest.fixture(scope="session")
def four_corner_15_ifs():
    return build_cantor_ifs(2, 1.5)


@pytest.fixture(scope="session")
def four_corner_12_ifs():
    return build_cantor_ifs(2, 1.2)


@pytest.fixture(scope="session")
def mid_thirds_g6(mid_thirds_ifs):
    return natural_measure(mid_thirds_ifs, 6)


@pytest.fixture(scope="session")
def mid_thirds_g8(mid_thirds_ifs):
    return natural_measure(mid_thirds_ifs, 8)


@pytest.fixture(scope="session")
def four_corner_15_g6(four_corner_15_ifs):
    return natural_measure(four_corner_15_ifs, 6)


@pytest.fixture(scope="session")
def four_corner_15_g7(four_corner_15_ifs):
    return natural_measure(four_corner_15_ifs, 7)


@pytest.fixture(scope="session")
def four_corner_12_g5(four_corner_12_ifs):
    return natural_measure(four_corner_12_ifs, 5)


@pytest.fixture(scope="session")
def lebesgue_1d_g10():
    return lebesgue_quadrature(1, 1024)


@pytest.fixture(scope="session")
def lebesgue_2d_256():
    return lebesgue_quadrature(2, 256)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
