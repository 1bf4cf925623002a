"""
Shared fixtures for the heavyfield test suite
"""

import copy

import numpy as np
import pytest
import yaml

from heavyfield_lib.config import DEFAULTS, resolve
from heavyfield_lib.datagen import init_2L, init_3L, make_pool
from heavyfield_lib.models import DataSpec, Hyper, InitSpec
from heavyfield_lib.network import make_network
from heavyfield_lib.utils import deep_merge


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def net2():
    return make_network('2l', 'tanh', loss='logistic')


@pytest.fixture
def net3():
    return make_network('3l', 'tanh', loss='logistic')


@pytest.fixture
def data_spec():
    return DataSpec(dim=5)


@pytest.fixture
def pool(data_spec):
    return make_pool(data_spec, 32, seed=3)


@pytest.fixture
def hyper():
    return Hyper(gamma=1.0, eps=0.05, T=0.5)


@pytest.fixture
def W2(data_spec):
    return init_2L(InitSpec(), 8, data_spec.dim, seed=1)


@pytest.fixture
def W3(data_spec):
    return init_3L(InitSpec(), 4, 3, data_spec.dim, seed=1)


def merged_config(overrides=None):
    config = copy.deepcopy(DEFAULTS)
    deep_merge(config, copy.deepcopy(overrides or {}))
    return config


@pytest.fixture
def make_config():
    """Typed ExperimentConfig from DEFAULTS plus overrides"""
    def build(**overrides):
        return resolve(merged_config(overrides))
    return build


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML experiment file and return its path"""
    def write(config, name='heavyfield.yaml'):
        path = tmp_path / name
        with open(path, 'w') as f:
            yaml.safe_dump(config, f, sort_keys=False)
        return path
    return write


TINY = {
    'widths': [4],
    'seeds': [0],
    'hyper': {'gamma': 1.0, 'eps': 0.05, 'horizon': 0.2},
    'data': {'dim': 3},
    'training': {'pool_size': 32, 'pd_substeps': 4},
    'coupling': {'ref_factor': 4, 'proxy_substeps': 4},
}


@pytest.fixture
def tiny():
    """Smallest experiment that still exercises every code path"""
    return copy.deepcopy(TINY)
