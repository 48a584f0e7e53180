import numpy as np
import pytest

import fofr


@pytest.fixture(scope="session")
def grid100():
    return fofr.make_grid(100)


@pytest.fixture(scope="session")
def dgp1_data(grid100):
    """One DGP-1 dataset at the reference design (n=60, G=100)."""
    rng = np.random.default_rng(42)
    spec = fofr.DgpSpec(dgp=1, n=60, G=100, error="i", seed=0)
    X, Y, beta0 = fofr.generate_dataset(spec, rng)
    return X, Y, beta0


@pytest.fixture(scope="session")
def dgp1_cov(dgp1_data):
    return fofr.empirical_covariance(dgp1_data[0])


@pytest.fixture(scope="session")
def dgp1_es(dgp1_cov, grid100):
    return fofr.solve_eigensystem(dgp1_cov, 4, grid100)


@pytest.fixture(scope="session")
def small_problem():
    """Small, fast fit for inference tests: DGP 2 on a coarse grid."""
    grid = fofr.make_grid(40)
    rng = np.random.default_rng(7)
    spec = fofr.DgpSpec(dgp=2, n=30, G=40, error="i", seed=0)
    X, Y, beta0 = fofr.generate_dataset(spec, rng)
    cov = fofr.empirical_covariance(X)
    es = fofr.solve_eigensystem(cov, 4, grid)
    model = fofr.fit(X, Y, es)
    return {"grid": grid, "X": X, "Y": Y, "beta0": beta0, "cov": cov, "es": es, "model": model}


@pytest.fixture(scope="session")
def small_ensemble(small_problem):
    return fofr.bootstrap_ensemble(
        small_problem["X"], small_problem["Y"], small_problem["model"], 60, 1234
    )
