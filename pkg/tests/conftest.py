"""Shared fixtures: the benchmark presets and their transforms."""

import pytest

from ilcset.presets import build_preset
from ilcset.set_transform import build_p_transform, build_q_transform


@pytest.fixture(scope="session")
def example1():
    return build_preset("example1")


@pytest.fixture(scope="session")
def example2():
    return build_preset("example2")


@pytest.fixture(scope="session")
def example1_clean():
    return build_preset("example1-clean")


@pytest.fixture(scope="session")
def example2_clean():
    return build_preset("example2-clean")


@pytest.fixture(scope="session")
def q_example1(example1):
    return build_q_transform(example1.system.D, example1.xi)


@pytest.fixture(scope="session")
def p_example2(example2):
    return build_p_transform(example2.system.B, example2.system.C, example2.gamma)
