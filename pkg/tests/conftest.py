import pytest
from hypothesis import HealthCheck, settings

from leveraged_knn import build_graph, gen_ripley

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ripley():
    return gen_ripley(250, 1000, seed=0)


@pytest.fixture(scope="session")
def ripley_graph(ripley):
    return build_graph(ripley[0], 9)
