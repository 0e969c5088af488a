"""
Fixtures partagées des tests (graphes de référence)
"""

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from filter.data_loading import load_graph
from functions.threads import build_thread_map

FIXTURES = Path(__file__).parent / "fixtures"
GRAPHS = FIXTURES / "graphs"

PROPERTY_SETTINGS = settings(
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


@pytest.fixture
def g2():
    return load_graph(GRAPHS / "g2.json")


@pytest.fixture
def g2_map(g2):
    return build_thread_map(g2)


@pytest.fixture
def chain():
    return load_graph(GRAPHS / "chain.json")


@pytest.fixture
def overlap():
    return load_graph(GRAPHS / "overlap.json")


@pytest.fixture
def nested():
    return load_graph(GRAPHS / "nested.json")


@pytest.fixture
def optional():
    return load_graph(GRAPHS / "optional.json")
