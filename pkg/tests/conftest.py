import numpy as np
import pytest

from hierfrf.synthetic import jittered_population, temperature_sweep, training_temperature_dataset

CASE1_MEANS_HZ = np.array([190.0, 335.0]) / (2 * np.pi)


@pytest.fixture(scope="session")
def population():
    return jittered_population(CASE1_MEANS_HZ, [0.006, 0.006], [-0.004, -0.004], seed=0)


@pytest.fixture(scope="session")
def case1_data(population):
    return population.training_dataset()


@pytest.fixture(scope="session")
def sweep():
    return temperature_sweep(seed=0)


@pytest.fixture(scope="session")
def case2_data(sweep):
    return training_temperature_dataset(sweep)


def central_difference(f, x, rel=1e-7):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g
