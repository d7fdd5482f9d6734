import os
import time

import numpy as np
import pytest

os.environ["CELERY_TASK_ALWAYS_EAGER"] = "1"
os.environ.setdefault("REDIS_URL", "redis://localhost:6379/0")

from picture_lab.config import reload_settings  # noqa: E402

reload_settings()

from picture_lab.experiment import run_experiment  # noqa: E402
from picture_lab.fock_space import assemble_field_operator, build_ladder_operators, prepare_wave_packet  # noqa: E402
from picture_lab.lattice_model import LatticeConfig, Scheme, build_free_hamiltonian, mode_basis  # noqa: E402
from picture_lab.models import ExperimentConfig  # noqa: E402

PACKET = {1: 1 / np.sqrt(2), 2: 1 / np.sqrt(2)}


def make_basis(n_sites=4, box_length=4.0, mass=1.0, charge=1.0, scheme=Scheme.SPECTRAL):
    config = LatticeConfig(n_sites=n_sites, box_length=box_length, mass=mass, charge=charge, scheme=scheme)
    return mode_basis(build_free_hamiltonian(config), config)


def make_field(basis):
    return assemble_field_operator(build_ladder_operators(basis), basis)


@pytest.fixture(scope="session")
def basis():
    return make_basis()


@pytest.fixture(scope="session")
def hopping_basis():
    return make_basis(scheme=Scheme.GAUGED_HOPPING)


@pytest.fixture(scope="session")
def field(basis):
    return make_field(basis)


@pytest.fixture(scope="session")
def hopping_field(hopping_basis):
    return make_field(hopping_basis)


@pytest.fixture(scope="session")
def packet_state(basis, field):
    return prepare_wave_packet(basis, field.ladder, PACKET)


def experiment_payload(outputs, dt=1 / 32, **numerics):
    return {
        "name": "canonical",
        "lattice": {"n_sites": 4, "box_length": 4.0, "mass": 1.0, "charge": 1.0},
        "packet": {"weights": {1: 1 / np.sqrt(2), 2: 1 / np.sqrt(2)}},
        "pulse": {"t1": 1.0, "f_star_multiples": [0.0, 1.0, 2.0]},
        "tf": 2.0,
        "dt": dt,
        "outputs": str(outputs),
        "numerics": {"series_points": 3, "identity_scan_sites": [4], **numerics},
    }


@pytest.fixture()
def experiment_config(tmp_path):
    return ExperimentConfig.model_validate(experiment_payload(tmp_path / "runs"))


@pytest.fixture(scope="session")
def canonical_run(tmp_path_factory):
    payload = experiment_payload(
        tmp_path_factory.mktemp("runs"),
        dt="auto",
        identity_scan_sites=[4, 6],
        identity_scan_multiples=[0.0, 0.01, 0.02, 0.5, 1.0],
    )
    started = time.perf_counter()
    record = run_experiment(ExperimentConfig.model_validate(payload))
    return record, time.perf_counter() - started


@pytest.fixture(scope="session")
def canonical_record(canonical_run):
    return canonical_run[0]
