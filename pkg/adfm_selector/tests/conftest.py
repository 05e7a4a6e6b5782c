from pathlib import Path

import numpy as np
import pytest

from adfm_selector.models import StationPartition, SystemModel
from adfm_selector.services.rdfm import candidate_bipartitions, make_rdfm
from adfm_selector.services.spectral import canonicalize
from adfm_selector.services.system_loader import load_model

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'
EXAMPLE1 = FIXTURES / 'example1.json'
DFM_TWO_STATION = FIXTURES / 'dfm_two_station.json'

PROPERTY_SEEDS = range(100)


@pytest.fixture(scope='session')
def example1():
    return load_model(EXAMPLE1)


@pytest.fixture(scope='session')
def dfm_model():
    return load_model(DFM_TWO_STATION)


def _union_rdfm(model, sigma, epsilon=0.015):
    cs = canonicalize(model, sigma)
    candidates = candidate_bipartitions(cs, epsilon)
    return make_rdfm(cs, [bip for bip, _ in candidates], epsilon, source=model)


@pytest.fixture(scope='session')
def rdfm_sigma1(example1):
    return _union_rdfm(example1, 1.0)


@pytest.fixture(scope='session')
def rdfm_sigma3(example1):
    return _union_rdfm(example1, 3.0)


def random_model(seed, n_max=6, v_max=3):
    """Dense real model with 2..v_max single-input single-output stations."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    v = int(rng.integers(2, v_max + 1))
    return SystemModel(
        name=f"random-{seed}",
        A=rng.standard_normal((n, n)),
        B=rng.standard_normal((n, v)),
        C=rng.standard_normal((v, n)),
        D=rng.standard_normal((v, v)),
        partition=StationPartition(stations=((1, 1),) * v),
    )


def random_model_with_isolated_mode(seed, sigma=10.0, n_max=6, v_max=3):
    """Real model whose mode ``sigma`` is well separated, hidden by an orthogonal change of basis."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    v = int(rng.integers(2, v_max + 1))
    A = np.zeros((n, n))
    A[0, 0] = sigma
    A[1:, 1:] = rng.standard_normal((n - 1, n - 1))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return SystemModel(
        name=f"isolated-{seed}",
        A=Q @ A @ Q.T,
        B=Q @ rng.standard_normal((n, v)),
        C=rng.standard_normal((v, n)) @ Q.T,
        D=rng.standard_normal((v, v)),
        partition=StationPartition(stations=((1, 1),) * v),
    )


def random_partitioned_model(seed, n_max=5, v_max=4, channels_max=3):
    """Dense real model whose stations own 1..channels_max inputs and outputs each."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    v = int(rng.integers(2, v_max + 1))
    stations = tuple((int(rng.integers(1, channels_max + 1)), int(rng.integers(1, channels_max + 1))) for _ in range(v))
    m = sum(m_i for m_i, _ in stations)
    r = sum(r_i for _, r_i in stations)
    return SystemModel(
        name=f"partitioned-{seed}",
        A=rng.standard_normal((n, n)),
        B=rng.standard_normal((n, m)),
        C=rng.standard_normal((r, n)),
        D=rng.standard_normal((r, m)),
        partition=StationPartition(stations=stations),
    )
