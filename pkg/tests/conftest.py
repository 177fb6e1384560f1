import numpy as np
import pytest

from robust_forward import (ConvexSet, SpatialGrid, ou_tanh_model, power_driver, solve_ergodic_false_transient,
                            solve_ergodic_vanishing_discount)


def const_theta(c, k=1):
    return lambda v: np.full((np.atleast_2d(v).shape[0], k), float(c))


@pytest.fixture(scope="session")
def model1():
    m = ou_tanh_model(a=2.0, theta_max=0.5)
    d = power_driver(m.theta, 0.5, ConvexSet.unconstrained(1), ConvexSet.box([-0.2], [0.2]), variant="model1")
    return m, d, SpatialGrid.for_model(m)


@pytest.fixture(scope="session")
def model1_vd(model1):
    m, d, g = model1
    return solve_ergodic_vanishing_discount(d, g, model=m)


@pytest.fixture(scope="session")
def model1_ft(model1):
    m, d, g = model1
    return solve_ergodic_false_transient(d, g, model=m)
