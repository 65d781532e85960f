import numpy as np
import pytest

from fbsim.runner import load_device, packaged_config
from fbsim.spectra import RingSpec, configure


@pytest.fixture(scope="session")
def ring_a():
    return RingSpec(
        label="A",
        radius_um=30.0,
        fsr_ghz=377.2,
        reference_resonance_thz=194.0,
        q_factor=150000.0,
        sfwm_efficiency_hz_per_uw2=57.6,
    )


@pytest.fixture(scope="session")
def ring_b():
    return RingSpec(
        label="B",
        radius_um=30.305,
        fsr_ghz=373.4,
        reference_resonance_thz=194.0,
        q_factor=150000.0,
        sfwm_efficiency_hz_per_uw2=62.4,
    )


@pytest.fixture(scope="session")
def phi_device():
    return load_device(packaged_config("qubit_phi.toml"))


@pytest.fixture(scope="session")
def psi_device():
    return load_device(packaged_config("qubit_psi.toml"))


@pytest.fixture(scope="session")
def qudit_device():
    return load_device(packaged_config("qudit.toml"))


@pytest.fixture(scope="session")
def phi_grid(phi_device):
    return configure(phi_device)


@pytest.fixture(scope="session")
def psi_grid(psi_device):
    return configure(psi_device)


@pytest.fixture(scope="session")
def qudit_grid(qudit_device):
    return configure(qudit_device)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
