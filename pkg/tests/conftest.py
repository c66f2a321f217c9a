import pytest
from hypothesis import HealthCheck, settings

from systolica.mesh_oracle import build_mesh

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_mesh(h=0.02)


@pytest.fixture(scope="session")
def mesh_01():
    return build_mesh(h=0.01)
