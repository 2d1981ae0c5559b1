import math
from fractions import Fraction

import numpy as np
import pytest

from framelab import expr as ex
from framelab import metric as mt


@pytest.fixture(scope="session")
def flat2():
    return mt.flat_euclidean(2)


@pytest.fixture(scope="session")
def torus2():
    return mt.flat_torus(2)


@pytest.fixture(scope="session")
def sphere():
    return mt.round_sphere()


@pytest.fixture(scope="session")
def eh():
    return mt.eguchi_hanson(1.0)


@pytest.fixture(scope="session")
def cone_smooth():
    return mt.smoothed_cone(0.7, 0.1)


@pytest.fixture(scope="session")
def cone_pair():
    # g sharper than g': the two Levi-Civita connections genuinely differ
    return mt.smoothed_cone(0.7, 0.15), mt.smoothed_cone(0.7, 0.30)


@pytest.fixture(scope="session")
def s3_quarter():
    """Round S^3 of curvature 1 in Euler angles: (1/4)(sigma1^2 + sigma2^2
    + sigma3^2) with sigma3 = dps + cos(th) dph."""
    th = ex.Sym("th")
    q = ex.Num(Fraction(1, 4))
    c = ex.cos(th)
    comps = [
        [q, ex.Num(Fraction(0)), ex.Num(Fraction(0))],
        [ex.Num(Fraction(0)), q, ex.Mul(q, c)],
        [ex.Num(Fraction(0)), ex.Mul(q, c), q],
    ]
    dom = ((0.25, math.pi - 0.25), (0.0, 2 * math.pi), (0.0, 2 * math.pi))
    return mt.MetricSpec(3, ("th", "ph", "ps"), comps, dom, {},
                         {"ph": 2 * math.pi, "ps": 2 * math.pi}, "round-S3")


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)
