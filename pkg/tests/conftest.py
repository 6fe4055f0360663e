import numpy as np
import pytest

from coprime_mmse import (
    averaging_combiner,
    coarray_lag_sets,
    make_coprime_array,
    selection_combiner,
    SourceScene,
)


@pytest.fixture(scope="session")
def geometry23():
    return make_coprime_array(2, 3)


@pytest.fixture(scope="session")
def geometry25():
    return make_coprime_array(2, 5)


@pytest.fixture(scope="session")
def lag_map23(geometry23):
    return coarray_lag_sets(geometry23)


@pytest.fixture(scope="session")
def sel23(lag_map23):
    return selection_combiner(lag_map23)


@pytest.fixture(scope="session")
def avg23(lag_map23):
    return averaging_combiner(lag_map23)


def random_scene(rng, n_sources=2, power=10.0, noise_power=1.0, spread=1.4):
    """Random scene with equal powers; DoAs uniform in (-spread, spread)."""
    return SourceScene(
        thetas=rng.uniform(-spread, spread, n_sources),
        powers=np.full(n_sources, power),
        noise_power=noise_power,
    )
