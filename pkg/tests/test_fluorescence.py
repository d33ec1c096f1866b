"""Standing-wave scattering with micromotion sidebands against closed forms.

The fringe-averaged rate factorizes exactly: the arcsine average of the
standing-wave intensity is 2*i_peak*(1 - J0(2*k*a_z)*cos(2*k*(z - node))),
and the sideband comb is sum_n J_n(beta)^2 * Lorentzian_n, independently
evaluated here with scipy Bessel functions.
"""
import math

import numpy as np
import pytest
from scipy.special import j0, jv

from mirrortrap.errors import ConfigError
from mirrortrap.fluorescence import (
    MeasurementProtocol,
    StandingWaveConfig,
    fringe_scan,
    lineshape_scan,
    nearest_node,
    rate_statistics,
    scattering_rate_micromotion,
    scattering_rate_point,
    spectral_sum,
    standing_wave_intensity,
    synthesize_counts,
)
from mirrortrap.trap import DCField, IonSpecies

OMEGA_RF = 2.0 * math.pi * 42.5e6


def _sw(**kw):
    base = dict(i_peak=10.0, detuning=0.0, waist=5e-6)
    base.update(kw)
    return StandingWaveConfig(**base)


def _lorentz_sum(gamma, omega_rf, detuning, beta):
    orders = np.arange(-60, 61)
    jn2 = jv(orders, beta) ** 2
    lor = 1.0 / (1.0 + (2.0 * (detuning + orders * omega_rf) / gamma) ** 2)
    return float(np.sum(jn2 * lor))


def test_saturation_intensity_from_first_principles(yb):
    # 2 pi^2 hbar gamma c / (3 lambda^3) with CODATA literals
    hbar = 1.054571817e-34
    c = 299792458.0
    gamma = 2.0 * math.pi * 19.6e6
    lam = 369.5e-9
    ref = 2.0 * math.pi**2 * hbar * gamma * c / (3.0 * lam**3)
    assert yb.i_sat == pytest.approx(ref, rel=1e-10)
    # 50.8 mW/cm^2 in SI
    assert yb.i_sat == pytest.approx(508.0, rel=2e-3)


def test_standing_wave_profile(yb):
    sw = _sw(node_offset=1.7e-9)
    assert standing_wave_intensity(sw, yb, sw.node_offset) == 0.0
    anti = sw.node_offset + yb.wavelength / 4
    assert standing_wave_intensity(sw, yb, anti) == pytest.approx(4 * sw.i_peak, rel=1e-12)
    z = 13e-9
    shifted = standing_wave_intensity(sw, yb, z + yb.wavelength / 2)
    assert standing_wave_intensity(sw, yb, z) == pytest.approx(shifted, rel=1e-9)


def test_nearest_node(yb):
    sw = _sw(node_offset=2e-9)
    for z in (50.0e-6, 50.1e-6, -3e-6):
        node = nearest_node(sw, yb, z)
        assert abs(node - z) <= yb.wavelength / 4 + 1e-15
        assert math.sin(yb.k * (node - sw.node_offset)) == pytest.approx(0.0, abs=1e-6)


def test_resonant_saturation_rate_is_half_linewidth(yb):
    # I = i_sat at the antinode with i_peak = i_sat/4; on resonance with no
    # micromotion the linear-regime rate is gamma/2 = pi * 19.6 MHz
    sw = _sw(i_peak=yb.i_sat / 4.0)
    anti = yb.wavelength / 4
    res = scattering_rate_point(sw, yb, OMEGA_RF, anti, beta=0.0)
    assert float(res.rate) == pytest.approx(math.pi * 19.6e6, rel=1e-10)
    assert res.low_intensity_violated  # I = i_sat is far beyond linear


def test_lorentzian_half_width(yb):
    sw = _sw(i_peak=1.0)
    anti = yb.wavelength / 4
    peak = float(scattering_rate_point(sw, yb, OMEGA_RF, anti, 0.0, detuning=0.0).rate)
    for sign in (+1, -1):
        half = float(scattering_rate_point(sw, yb, OMEGA_RF, anti, 0.0,
                                           detuning=sign * yb.gamma / 2).rate)
        assert half == pytest.approx(peak / 2.0, rel=1e-12)


def test_low_intensity_flag_threshold(yb):
    anti = yb.wavelength / 4
    ok = scattering_rate_point(_sw(i_peak=0.02 * yb.i_sat), yb, OMEGA_RF, anti, 0.0)
    hot = scattering_rate_point(_sw(i_peak=0.03 * yb.i_sat), yb, OMEGA_RF, anti, 0.0)
    assert not ok.low_intensity_violated   # 4 * 0.02 = 0.08 < 0.1
    assert hot.low_intensity_violated      # 4 * 0.03 = 0.12 > 0.1


def test_spectral_sum_matches_direct_evaluation(yb):
    beta = 1.3
    dets = np.array([0.0, -OMEGA_RF, 0.4 * yb.gamma, 3.0 * OMEGA_RF])
    ours = spectral_sum(yb, OMEGA_RF, dets, beta)
    ref = [_lorentz_sum(yb.gamma, OMEGA_RF, d, beta) for d in dets]
    assert np.allclose(ours, ref, rtol=1e-12)


@pytest.mark.parametrize("beta", [0.1, 1.0, 5.0])
def test_micromotion_rate_matches_separable_closed_form(yb, beta):
    sw = _sw(i_peak=3.0, node_offset=1e-9)
    a_z = beta / yb.k
    dets = np.array([0.0, -OMEGA_RF, 0.7 * yb.gamma])
    for dz in (0.0, yb.wavelength / 8, yb.wavelength / 4, 17.3e-9):
        z = sw.node_offset + dz
        rr = scattering_rate_micromotion(sw, yb, OMEGA_RF, z, a_z, detuning=dets)
        spatial = 2.0 * sw.i_peak * (1.0 - j0(2 * beta) * math.cos(2 * yb.k * dz))
        for i, d in enumerate(dets):
            expected = (0.5 * yb.gamma / yb.i_sat) * spatial \
                * _lorentz_sum(yb.gamma, OMEGA_RF, d, beta)
            if expected == 0.0:
                assert abs(rr.rate[i]) < 1e-12
            else:
                assert abs(rr.rate[i] - expected) / expected <= 1e-8


def test_node_antinode_contrast(yb):
    sw = _sw(i_peak=2.0)
    beta = 1.7
    a_z = beta / yb.k
    node = float(scattering_rate_micromotion(sw, yb, OMEGA_RF, 0.0, a_z).rate)
    anti = float(scattering_rate_micromotion(sw, yb, OMEGA_RF,
                                             yb.wavelength / 4, a_z).rate)
    expected = (1.0 - j0(2 * beta)) / (1.0 + j0(2 * beta))
    assert node / anti == pytest.approx(expected, rel=1e-8)


def test_zero_amplitude_reduces_to_point_rate(yb):
    sw = _sw(i_peak=1.5)
    z = 11e-9
    avg = scattering_rate_micromotion(sw, yb, OMEGA_RF, z, 0.0,
                                      detuning=np.array([0.0, -OMEGA_RF]))
    point = scattering_rate_point(sw, yb, OMEGA_RF, z, 0.0,
                                  detuning=np.array([0.0, -OMEGA_RF]))
    assert np.allclose(np.asarray(avg.rate), np.asarray(point.rate), rtol=1e-12)


def test_negative_amplitude_rejected(yb):
    with pytest.raises(ValueError, match="non-negative"):
        scattering_rate_micromotion(_sw(), yb, OMEGA_RF, 0.0, -1e-9)


def test_sideband_carrier_ratio_narrow_linewidth(yb):
    # resolved-sideband limit: rate(-Omega)/rate(0) -> (J1/J0)^2(beta)
    narrow = IonSpecies(name="narrow", mass=yb.mass, charge=yb.charge,
                        wavelength=yb.wavelength, gamma=yb.gamma / 100.0)
    beta = 0.5
    a_z = beta / narrow.k
    sw = _sw(i_peak=1.0)
    anti = narrow.wavelength / 4
    rr = scattering_rate_micromotion(sw, narrow, OMEGA_RF, anti, a_z,
                                     detuning=np.array([-OMEGA_RF, 0.0]))
    ratio = rr.rate[0] / rr.rate[1]
    expected = (jv(1, beta) / jv(0, beta)) ** 2
    assert ratio == pytest.approx(expected, rel=1e-3)


def test_sideband_carrier_ratio_native_linewidth(yb):
    # at gamma/Omega ~ 0.46 the carrier tail leaks into the sideband; the
    # ratio must follow the full Lorentzian sum, not the resolved limit
    beta = 0.5
    a_z = beta / yb.k
    sw = _sw(i_peak=1.0)
    anti = yb.wavelength / 4
    rr = scattering_rate_micromotion(sw, yb, OMEGA_RF, anti, a_z,
                                     detuning=np.array([-OMEGA_RF, 0.0]))
    ratio = rr.rate[0] / rr.rate[1]
    expected = _lorentz_sum(yb.gamma, OMEGA_RF, -OMEGA_RF, beta) \
        / _lorentz_sum(yb.gamma, OMEGA_RF, 0.0, beta)
    assert ratio == pytest.approx(expected, rel=1e-10)
    resolved = (jv(1, beta) / jv(0, beta)) ** 2
    assert abs(ratio - resolved) > 0.05 * ratio


def test_sideband_grows_with_amplitude_at_node(yb):
    sw = _sw(i_peak=1.0)
    rates = []
    for a_nm in (5.0, 10.0, 20.0, 40.0):
        rr = scattering_rate_micromotion(sw, yb, OMEGA_RF, 0.0, a_nm * 1e-9,
                                         detuning=-OMEGA_RF)
        rates.append(float(rr.rate))
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_synthesize_counts_determinism_and_statistics():
    protocol = MeasurementProtocol(exposure=0.1, repeats=200, rng_seed=99,
                                   synthesize=True)
    a = synthesize_counts(1000.0, protocol, stream_key=(3,))
    b = synthesize_counts(1000.0, protocol, stream_key=(3,))
    c = synthesize_counts(1000.0, protocol, stream_key=(4,))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (200,)
    # Poisson mean 100 per exposure, SEM = 10/sqrt(200)
    assert abs(a.mean() - 100.0) < 5.0 * 10.0 / math.sqrt(200.0)


def test_rate_statistics():
    rate, err = rate_statistics([10, 12, 14], 0.5)
    assert rate == pytest.approx(24.0, rel=1e-12)
    expected_err = np.std([10, 12, 14], ddof=1) / math.sqrt(3) / 0.5
    assert err == pytest.approx(expected_err, rel=1e-12)
    rate1, err1 = rate_statistics([7], 1.0)
    assert rate1 == 7.0 and err1 > 0.0


def test_protocol_validation():
    with pytest.raises(ConfigError):
        MeasurementProtocol(exposure=-1.0, repeats=5, rng_seed=1)
    with pytest.raises(ConfigError):
        MeasurementProtocol(exposure=0.1, repeats=0, rng_seed=1)
    with pytest.raises(ConfigError):
        StandingWaveConfig(i_peak=1.0, detuning=0.0, waist=-1e-6)
    with pytest.raises(ConfigError):
        StandingWaveConfig(i_peak=1.0, detuning=0.0, waist=1e-6,
                           collection_efficiency=0.0)


def test_fringe_scan_zero_intensity_is_pure_background(five_wire, drive, yb):
    sw = _sw(i_peak=0.0, background_rate=7.5, collection_efficiency=0.1)
    protocol = MeasurementProtocol(exposure=0.1, repeats=5, rng_seed=1)
    scan = fringe_scan(five_wire, drive, yb, sw, protocol,
                       np.linspace(-6.0, 6.0, 4))
    assert np.all(scan.rates == 7.5)
    assert not np.any(scan.flags)
    assert scan.meta["synthesized"] is False


def test_fringe_scan_meta_and_monotone_heights(five_wire, drive, yb, null):
    sw = _sw(i_peak=1.0, detuning=-0.5 * yb.gamma, collection_efficiency=1e-3)
    protocol = MeasurementProtocol(exposure=0.1, repeats=5, rng_seed=1)
    dc = DCField(omega_axial=2 * math.pi * 0.5e6, center=tuple(null))
    scan = fringe_scan(five_wire, drive, yb, sw, protocol,
                       np.linspace(-10.0, 10.0, 6), dc=dc)
    heights = np.array(scan.meta["equilibrium_heights_m"])
    assert np.all(np.diff(heights) > 0.0)
    assert np.all(np.array(scan.meta["micromotion_amplitudes_m"]) >= 0.0)
    assert scan.abscissa_unit == "V"
    assert np.all(scan.rates >= 0.0)
    assert np.isfinite(scan.meta["period_volts"])
    assert np.all(scan.stderr > 0.0)


def test_lineshape_scan_parks_at_node_and_is_deterministic(five_wire, drive, yb):
    sw = _sw(i_peak=1.0, node_offset=3e-9, collection_efficiency=1e-3,
             background_rate=5.0)
    protocol = MeasurementProtocol(exposure=0.05, repeats=4, rng_seed=7,
                                   synthesize=True)
    dets = 2 * math.pi * np.linspace(-50e6, 50e6, 7)
    a = lineshape_scan(five_wire, drive, yb, sw, protocol, dets, a_z=20e-9)
    b = lineshape_scan(five_wire, drive, yb, sw, protocol, dets, a_z=20e-9)
    assert np.array_equal(a.rates, b.rates)
    node = a.meta["node_position_m"]
    assert math.sin(yb.k * (node - sw.node_offset)) == pytest.approx(0.0, abs=1e-6)
    assert a.meta["beta"] == pytest.approx(yb.k * 20e-9, rel=1e-12)
    assert a.abscissa_unit == "rad/s"
    # predicted errors replace sampled ones when synthesis is off
    quiet = MeasurementProtocol(exposure=0.05, repeats=4, rng_seed=7)
    c = lineshape_scan(five_wire, drive, yb, sw, protocol=quiet,
                       detunings=dets, a_z=20e-9)
    assert np.allclose(c.stderr,
                       np.sqrt(c.rates / (quiet.repeats * quiet.exposure)))
