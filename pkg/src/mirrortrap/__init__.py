"""mirrortrap: simulation of a mirror-integrated surface ion trap.

Covers the chain from electrode electrostatics through RF confinement and
null steering, standing-wave fluorescence with micromotion sidebands,
photon-count synthesis and model fitting, to slow dielectric charging of the
mirror opening and the resulting axial trap bifurcation.
"""

__version__ = "0.1.0"

from .geometry import ElectrodePatch, ElectrodeSet, five_wire_electrodes
from .electrostatics import patch_potential, patch_field, superpose
from .trap import (
    RFDriveConfig,
    IonSpecies,
    AmplifierCalibration,
    DCField,
    rf_field_phasor,
    pseudopotential,
    find_rf_null,
    trap_frequencies,
    tweaker_height_curve,
    micromotion_amplitude,
    phase_mismatch_micromotion,
    dds_to_voltage,
)
from .fluorescence import (
    StandingWaveConfig,
    MeasurementProtocol,
    ScanResult,
    standing_wave_intensity,
    scattering_rate_point,
    scattering_rate_micromotion,
    fringe_scan,
    lineshape_scan,
    synthesize_counts,
)
from .bessel import bessel_weights
from .fitting import fit_micromotion, FitResult
from .charging import (
    ChargePatchState,
    ChargingModelConfig,
    patch_charge_field,
    accumulate_charge,
    exposure_simulation,
    axial_potential_minima,
)
