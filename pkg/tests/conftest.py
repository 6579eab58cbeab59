import numpy as np
import pytest

from rotsgpe.basis import ModeTable, build_quadrature


@pytest.fixture(scope="session")
def band291():
    table = ModeTable(4, 0.979)
    return table, build_quadrature(table)


@pytest.fixture(scope="session")
def band_small():
    table = ModeTable(6, 0.5)
    return table, build_quadrature(table)


def random_coeffs(rng, size):
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)
