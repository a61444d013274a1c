import warnings
from pathlib import Path

import numpy as np
import pytest

from romram.config import RunConfig, load_config
from romram.device import DeviceParams, VariationSpec, VtFlavor
from romram.dynamics import BitCell, SimConfig, simulate_read_event
from romram.waveforms import ControlWaveforms

REPO_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG = REPO_ROOT / "configs" / "default.yaml"


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return load_config(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def params(run_config) -> DeviceParams:
    return run_config.device_params()


@pytest.fixture(scope="session")
def cfg(run_config) -> SimConfig:
    return run_config.sim_config()


@pytest.fixture(scope="session")
def variation(run_config) -> VariationSpec:
    return run_config.variation_spec()


@pytest.fixture(scope="session", autouse=True)
def warm_kernels(cfg, params):
    """Compile the integrator kernels once so timing-sensitive tests are honest."""
    wave = ControlWaveforms.read_pulse(cfg.vdd, 0.0, 0.2e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        simulate_read_event(BitCell.nominal(1, VtFlavor.LOW_VT), wave, cfg, params)


def nominal_cells() -> list[BitCell]:
    """The four cases, MSB = RAM bit, LSB = ROM bit, nominal devices."""
    return [
        BitCell.nominal(q, flavor)
        for q in (0, 1)
        for flavor in (VtFlavor.HIGH_VT, VtFlavor.LOW_VT)
    ]


def assert_strictly_ordered(values: np.ndarray) -> None:
    assert np.all(np.diff(values) < 0), f"expected strictly decreasing: {values}"
