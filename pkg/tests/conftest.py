"""Shared fixtures: the default five-wire trap, drive, and ion."""
import math

import pytest

from mirrortrap.geometry import five_wire_electrodes
from mirrortrap.trap import IonSpecies, RFDriveConfig, find_rf_null

OMEGA_RF = 2.0 * math.pi * 42.5e6


@pytest.fixture(scope="session")
def five_wire():
    return five_wire_electrodes()


@pytest.fixture(scope="session")
def drive():
    return RFDriveConfig(v_main=185.0, omega=OMEGA_RF)


@pytest.fixture(scope="session")
def yb():
    return IonSpecies.yb174()


@pytest.fixture(scope="session")
def null(five_wire, drive):
    return find_rf_null(five_wire, drive, (0.0, 0.0, 50e-6))
