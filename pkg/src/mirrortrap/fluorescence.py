"""Standing-wave fluorescence of a trapped ion with residual micromotion.

The retroreflected probe forms I(z) = 4 * i_peak * sin^2(k (z - node)), so an
ion reports its position within a lambda/2 fringe through its scattering
rate. Micromotion at the drive frequency Omega does two things at once:

* phase modulation of the probe in the ion frame redistributes the carrier
  into sidebands weighted by J_n(beta)^2 with beta = k * a_z, and
* the same oscillation smears the time-averaged position over the arcsine
  density on (-a_z, a_z), which the fringe average runs over.

The low-intensity (linear) scattering model is used throughout; points whose
local intensity exceeds 0.1 * i_sat are computed anyway but flagged.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bessel import bessel_weights
from .errors import ConfigError
from .quadrature import arcsine_average
from .trap import drive_with_tweaker, equilibrium_position, find_rf_null, micromotion_amplitude

SATURATION_INTENSITY_FRACTION = 0.1


@dataclass(frozen=True)
class StandingWaveConfig:
    """Retroreflected probe beam and detection chain."""

    i_peak: float                       # W/m^2, single-pass peak intensity
    detuning: float                     # rad/s, probe detuning from resonance
    waist: float                        # m, 1/e^2 intensity radius
    background_rate: float = 0.0        # counts/s
    node_offset: float = 0.0            # m, position of any one field node
    collection_efficiency: float = 1.0  # detected fraction of scattered photons

    def __post_init__(self):
        if self.i_peak < 0.0:
            raise ConfigError("StandingWaveConfig.i_peak must be non-negative")
        if self.waist <= 0.0:
            raise ConfigError("StandingWaveConfig.waist must be positive")
        if self.background_rate < 0.0:
            raise ConfigError("StandingWaveConfig.background_rate must be non-negative")
        if not 0.0 < self.collection_efficiency <= 1.0:
            raise ConfigError("StandingWaveConfig.collection_efficiency must be in (0, 1]")


@dataclass(frozen=True)
class MeasurementProtocol:
    """Photon-counting protocol for one scan point."""

    exposure: float        # s
    repeats: int
    rng_seed: int
    synthesize: bool = False

    def __post_init__(self):
        if self.exposure <= 0.0:
            raise ConfigError("MeasurementProtocol.exposure must be positive")
        if self.repeats < 1:
            raise ConfigError("MeasurementProtocol.repeats must be >= 1")
        if self.rng_seed < 0:
            raise ConfigError("MeasurementProtocol.rng_seed must be non-negative")


@dataclass
class ScanResult:
    abscissa: np.ndarray
    rates: np.ndarray        # counts/s at the detector
    stderr: np.ndarray       # counts/s
    abscissa_name: str
    abscissa_unit: str
    flags: np.ndarray        # low-intensity assumption violated, per point
    meta: dict


class RateResult(NamedTuple):
    rate: object                  # photons/s scattered (float or array over detunings)
    low_intensity_violated: bool


def standing_wave_intensity(sw, species, z):
    """Standing-wave intensity 4 * i_peak * sin^2(k (z - node)), W/m^2."""
    ph = species.k * (np.asarray(z, dtype=float) - sw.node_offset)
    return 4.0 * sw.i_peak * np.sin(ph) ** 2


def nearest_node(sw, species, z):
    """Position of the intensity node closest to z."""
    half = 0.5 * species.wavelength
    return sw.node_offset + half * round((float(z) - sw.node_offset) / half)


def spectral_sum(species, omega_rf, detuning, beta, n_max=None):
    """sum_n J_n(beta)^2 / (1 + (2 (Delta + n Omega)/gamma)^2).

    Vectorized over ``detuning``. Invariant under beta -> -beta since only
    J_n^2 enters.
    """
    _, jn = bessel_weights(beta, n_max)
    orders = np.arange(-(len(jn) // 2), len(jn) // 2 + 1)
    det = np.asarray(detuning, dtype=float)
    shifted = det[..., None] + orders * omega_rf
    lor = 1.0 / (1.0 + (2.0 * shifted / species.gamma) ** 2)
    return np.sum(jn**2 * lor, axis=-1)


def scattering_rate_point(sw, species, omega_rf, z, beta, detuning=None, n_max=None):
    """Linear-regime scattering rate of an ion at fixed z, photons/s.

    S = (gamma/2) * I(z)/i_sat * spectral_sum. The formula is evaluated for
    any intensity; the flag records whether I(z) left the low-intensity
    domain of validity.
    """
    det = sw.detuning if detuning is None else detuning
    intensity = standing_wave_intensity(sw, species, z)
    spec = spectral_sum(species, omega_rf, det, beta, n_max)
    rate = 0.5 * species.gamma * (intensity / species.i_sat) * spec
    flagged = bool(np.max(intensity) > SATURATION_INTENSITY_FRACTION * species.i_sat)
    return RateResult(rate=rate, low_intensity_violated=flagged)


def scattering_rate_micromotion(sw, species, omega_rf, z, a_z, detuning=None, n_max=None):
    """Fringe-averaged scattering rate for micromotion amplitude a_z.

    The instantaneous position z - z' is averaged over the arcsine dwell
    density on (-a_z, a_z) while the sideband weights use beta = k * a_z;
    both effects come from the same drive term, so they share the amplitude.
    """
    if a_z < 0.0:
        raise ValueError("micromotion amplitude a_z must be non-negative")
    det = sw.detuning if detuning is None else detuning
    beta = species.k * a_z
    spec = spectral_sum(species, omega_rf, det, beta, n_max)
    scale = 0.5 * species.gamma / species.i_sat
    peak_intensity = 0.0

    def g(zp):
        nonlocal peak_intensity
        local = standing_wave_intensity(sw, species, float(z) - zp)
        peak_intensity = max(peak_intensity, float(np.max(local)))
        if np.ndim(spec) == 0:
            return scale * local * spec
        return scale * local[:, None] * spec[None, :]

    rate = arcsine_average(g, a_z)
    flagged = peak_intensity > SATURATION_INTENSITY_FRACTION * species.i_sat
    return RateResult(rate=rate, low_intensity_violated=flagged)


def synthesize_counts(rate, protocol, stream_key=()):
    """Poisson photon counts for ``repeats`` exposures at a mean rate.

    The RNG stream is keyed by (seed, *stream_key); scans pass their point
    index so results do not depend on evaluation order.
    """
    if rate < 0.0:
        raise ValueError("count rate must be non-negative")
    rng = np.random.default_rng((int(protocol.rng_seed),) + tuple(int(k) for k in stream_key))
    return rng.poisson(rate * protocol.exposure, size=protocol.repeats)


def rate_statistics(counts, exposure):
    """Sample mean rate and standard error of the mean, counts/s."""
    counts = np.asarray(counts, dtype=float)
    mean = counts.mean() / exposure
    if counts.size < 2:
        return mean, math.sqrt(max(counts.sum(), 1.0)) / exposure
    return mean, counts.std(ddof=1) / math.sqrt(counts.size) / exposure


def _predicted_stderr(rate, protocol):
    """Poisson-limited standard error of the protocol's mean rate."""
    return np.sqrt(np.maximum(rate, 0.0) / (protocol.repeats * protocol.exposure))


def _detected(sw, scattered_rate):
    return sw.collection_efficiency * scattered_rate + sw.background_rate


def fringe_scan(electrode_set, drive, species, sw, protocol, tweaker_voltages,
                dc=None, null_guess=(0.0, 0.0, 50e-6)):
    """Scattering rate versus symmetric tweaker voltage.

    Each point relocates the RF null, lets the fixed DC minimum pull the
    equilibrium back, and evaluates the fringe-averaged rate with the
    residual micromotion at that displaced equilibrium. A sinusoid fit of
    rate versus voltage estimates the fringe period in volts.
    """
    from .fitting import fit_sinusoid

    volts = np.asarray(list(tweaker_voltages), dtype=float)
    if volts.size < 4:
        raise ConfigError("fringe scan needs at least four tweaker voltages")
    rates = np.empty(volts.size)
    stderr = np.empty(volts.size)
    flags = np.zeros(volts.size, dtype=bool)
    heights = np.empty(volts.size)
    amplitudes = np.empty(volts.size)
    guess = np.asarray(null_guess, dtype=float)
    for i, v in enumerate(volts):
        drv = drive_with_tweaker(drive, v)
        null = find_rf_null(electrode_set, drv, guess)
        guess = null
        eq = equilibrium_position(electrode_set, drv, species, null, dc)
        a_z, _ = micromotion_amplitude(electrode_set, drv, species, eq)
        rr = scattering_rate_micromotion(sw, species, drv.omega, eq[2], a_z)
        detected = _detected(sw, float(rr.rate))
        flags[i] = rr.low_intensity_violated
        heights[i] = eq[2]
        amplitudes[i] = a_z
        if protocol.synthesize:
            counts = synthesize_counts(detected, protocol, (i,))
            rates[i], stderr[i] = rate_statistics(counts, protocol.exposure)
        else:
            rates[i] = detected
            stderr[i] = _predicted_stderr(detected, protocol)

    sine = fit_sinusoid(volts, rates)
    meta = {
        "period_volts": sine["period"],
        "sinusoid_fit": sine,
        "equilibrium_heights_m": heights.tolist(),
        "micromotion_amplitudes_m": amplitudes.tolist(),
        "synthesized": protocol.synthesize,
    }
    return ScanResult(
        abscissa=volts,
        rates=rates,
        stderr=stderr,
        abscissa_name="tweaker_amplitude",
        abscissa_unit="V",
        flags=flags,
        meta=meta,
    )


def lineshape_scan(electrode_set, drive, species, sw, protocol, detunings, a_z,
                   dc=None, null_guess=(0.0, 0.0, 50e-6)):
    """Scattering rate versus probe detuning with the ion parked at a node.

    ``a_z`` is the modeled micromotion amplitude (an experiment knob, not a
    derived quantity): sidebands at multiples of the drive frequency grow
    with it while the carrier shrinks.
    """
    dets = np.asarray(list(detunings), dtype=float)
    if dets.size < 1:
        raise ConfigError("lineshape scan needs at least one detuning")
    null = find_rf_null(electrode_set, drive, np.asarray(null_guess, dtype=float))
    eq = equilibrium_position(electrode_set, drive, species, null, dc)
    z_node = nearest_node(sw, species, eq[2])
    rr = scattering_rate_micromotion(sw, species, drive.omega, z_node, a_z, detuning=dets)
    detected = _detected(sw, np.asarray(rr.rate, dtype=float))
    flags = np.full(dets.size, rr.low_intensity_violated)
    rates = np.empty(dets.size)
    stderr = np.empty(dets.size)
    if protocol.synthesize:
        for i in range(dets.size):
            counts = synthesize_counts(float(detected[i]), protocol, (i,))
            rates[i], stderr[i] = rate_statistics(counts, protocol.exposure)
    else:
        rates = detected
        stderr = _predicted_stderr(detected, protocol)
    meta = {
        "node_position_m": z_node,
        "micromotion_amplitude_m": float(a_z),
        "beta": species.k * float(a_z),
        "synthesized": protocol.synthesize,
    }
    return ScanResult(
        abscissa=dets,
        rates=rates,
        stderr=stderr,
        abscissa_name="detuning",
        abscissa_unit="rad/s",
        flags=flags,
        meta=meta,
    )
