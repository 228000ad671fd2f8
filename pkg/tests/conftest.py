import pytest

import optspring as osp


@pytest.fixture(scope="session")
def config():
    return osp.paper_default_config()


@pytest.fixture(scope="session")
def derived(config):
    return osp.derive_cavity(config)


@pytest.fixture(scope="session")
def spring(config, derived):
    return osp.effective_resonance(config, derived)


@pytest.fixture(scope="session")
def measured_config():
    # coupling efficiency calibrated to the reference operating point
    return osp.measured_reference_config()


@pytest.fixture(scope="session")
def measured_derived(measured_config):
    return osp.derive_cavity(measured_config)


@pytest.fixture(scope="session")
def measured_spring(measured_config, measured_derived):
    return osp.effective_resonance(measured_config, measured_derived)
