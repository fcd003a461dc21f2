"""Shared fixtures: synthetic series and one small trained bundle."""

import numpy as np
import pytest

from counterpath.bundle import train_bundle
from counterpath.synth import VarSystemSpec, generate_var, standard_benchmarks


@pytest.fixture(scope="session")
def ar1_spec():
    return VarSystemSpec(
        names=("y",),
        coefficients=np.array([[[0.9]]]),
        noise_sigma=np.ones(1),
        target="y",
        actionable=("y",),
    )


@pytest.fixture(scope="session")
def ar1_series(ar1_spec):
    return generate_var(ar1_spec, 6000, seed=11)


@pytest.fixture(scope="session")
def ga5_series():
    return generate_var(standard_benchmarks()["ga5"], 2000, seed=3)


@pytest.fixture(scope="session")
def ga5_bundle(ga5_series):
    return train_bundle(ga5_series)


@pytest.fixture(scope="session")
def granger4_series():
    return generate_var(standard_benchmarks()["granger4"], 2500, seed=0)
