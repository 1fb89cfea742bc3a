import pytest

from adaptsim.defaults import (
    DEFAULT_INPUT_SIZES,
    default_model,
    default_requirement,
    default_topology,
)
from adaptsim.profiling import generate_synthetic_profile
from adaptsim.service_model import enumerate_configurations, sort_by_objective


@pytest.fixture(scope="session")
def face_topology():
    return default_topology()


@pytest.fixture(scope="session")
def face_profile(face_topology):
    return generate_synthetic_profile(default_model(), face_topology, DEFAULT_INPUT_SIZES)


@pytest.fixture(scope="session")
def face_requirement():
    return default_requirement()


@pytest.fixture(scope="session")
def face_sorted_configs(face_topology, face_profile):
    return sort_by_objective(
        enumerate_configurations(face_topology), face_profile, reference_input=6
    )
