import pytest

from squeezr.autolock import SupervisorConfig
from squeezr.plant import PlantConfig, init_plant

DR_MODE = 3


def lock_everything(plant, mode=DR_MODE, wait=2.0):
    """Bring the chain up by hand: SHG, OPA on ``mode``, B, C."""
    plant.set_lock("SHG", True)
    plant.advance(wait)
    plant.set_lock("OPA", True)
    plant.lock_to_mode(mode)
    plant.advance(wait)
    plant.set_lock("B", True)
    plant.advance(wait)
    plant.set_lock("C", True)
    plant.advance(wait)
    return plant


@pytest.fixture
def quiet_config():
    """No drifts, no sporadic events, no readout noise; DR on mode 3."""
    return PlantConfig(double_resonance_mode=DR_MODE).frozen(noiseless=True)


@pytest.fixture
def quiet_plant(quiet_config):
    return init_plant(quiet_config, seed=1)


@pytest.fixture
def locked_plant(quiet_plant):
    return lock_everything(quiet_plant)


@pytest.fixture
def supervisor_config():
    return SupervisorConfig()
