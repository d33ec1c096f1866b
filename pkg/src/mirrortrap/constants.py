"""Physical constants, loaded from a versioned data file.

Values live in ``data/constants_v1.json`` so the numbers used by a given
release are pinned and inspectable, not scattered through the source.
"""
import json
import math
from importlib import resources

_DATA_FILE = "constants_v1.json"


def _load():
    with resources.files(__package__).joinpath("data", _DATA_FILE).open() as fh:
        return json.load(fh)


_TABLE = _load()

CONSTANTS_VERSION = _TABLE["version"]

HBAR = _TABLE["hbar_J_s"]
C_LIGHT = _TABLE["c_m_per_s"]
EPSILON0 = _TABLE["epsilon0_F_per_m"]
E_CHARGE = _TABLE["elementary_charge_C"]
AMU = _TABLE["atomic_mass_unit_kg"]

YB174_MASS = _TABLE["yb174_mass_u"] * AMU
# natural linewidth of the Yb+ 2S1/2 - 2P1/2 cooling transition, gamma/2pi in Hz
YB_P12_LINEWIDTH_HZ = _TABLE["yb_p12_linewidth_hz"]
YB_SP_WAVELENGTH = _TABLE["yb_s_p_wavelength_m"]

COULOMB_K = 1.0 / (4.0 * math.pi * EPSILON0)
