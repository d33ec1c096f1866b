"""RF null, pseudopotential, secular frequencies, and the tweaker chain.

Oracles: the analytic five-wire null height sqrt(inner*outer), the 2-D
infinite-strip potential for a long rail, finite differences for the
pseudopotential derivative stack, the exact secular/Mathieu cross-relation
omega = q*Omega/(2*sqrt(2)) at a field zero, and hand-evaluated constants
for the driven-motion amplitude.
"""
import math

import numpy as np
import pytest

from mirrortrap.electrostatics import patch_potential, set_field_jacobian
from mirrortrap.errors import (
    ConfigError,
    NotConfiningError,
    PhaseMismatchError,
    SearchRegionError,
)
from mirrortrap.geometry import ElectrodePatch, five_wire_electrodes
from mirrortrap.trap import (
    AmplifierCalibration,
    DCField,
    IonSpecies,
    RFDriveConfig,
    dds_to_voltage,
    drive_with_tweaker,
    equilibrium_position,
    find_rf_null,
    micromotion_amplitude,
    phase_mismatch_micromotion,
    pickoff_voltage,
    pseudopotential,
    pseudopotential_gradient,
    pseudopotential_hessian,
    rf_field_phasor,
    trap_frequencies,
    tweaker_height_curve,
)

UM = 1e-6
OMEGA_RF = 2.0 * math.pi * 42.5e6


def test_null_height_matches_analytic_five_wire(null):
    analytic = math.sqrt(30e-6 * 87e-6)
    assert abs(null[0]) < 1e-9
    assert abs(null[1]) < 1e-9
    assert abs(null[2] - analytic) / analytic < 5e-4


def test_null_field_residual_is_tiny(five_wire, drive, null):
    e = rf_field_phasor(five_wire, drive, null)
    assert np.max(np.abs(e)) < 1e-6  # V/m at 185 V drive


def test_long_rail_matches_infinite_strip():
    # analytic 2-D strip: phi = V/pi * (atan((y2-y)/z) - atan((y1-y)/z))
    rail = ElectrodePatch(-0.5, 0.5, 30 * UM, 87 * UM, "main_rf")
    v = 185.0
    for y, z in [(0.0, 51 * UM), (50 * UM, 60 * UM), (-40 * UM, 20 * UM)]:
        strip = v / math.pi * (
            math.atan2(87 * UM - y, z) - math.atan2(30 * UM - y, z)
        )
        assert patch_potential(rail, v, (0.0, y, z)) == pytest.approx(strip, rel=1e-6)


def test_pseudopotential_scales_as_drive_squared(five_wire, drive, yb):
    p = (0.0, 5 * UM, 45 * UM)
    u1 = pseudopotential(five_wire, drive, yb, p)
    drive2 = RFDriveConfig(v_main=2 * drive.v_main, omega=drive.omega)
    assert pseudopotential(five_wire, drive2, yb, p) == pytest.approx(4 * u1, rel=1e-12)
    assert u1 > 0.0


def test_pseudopotential_derivative_stack(five_wire, drive, yb):
    p = np.array([2 * UM, 6 * UM, 44 * UM])
    h = 1e-11

    def central(fn, i, step):
        lo, hi = p.copy(), p.copy()
        lo[i] -= step
        hi[i] += step
        return (fn(hi) - fn(lo)) / (2 * step)

    grad = pseudopotential_gradient(five_wire, drive, yb, p)
    for i in range(3):
        fd = central(lambda q: pseudopotential(five_wire, drive, yb, q), i, h)
        assert grad[i] == pytest.approx(fd, rel=2e-6)
    hess = pseudopotential_hessian(five_wire, drive, yb, p)
    assert np.allclose(hess, hess.T, rtol=1e-10)
    for i in range(3):
        fd = central(lambda q: pseudopotential_gradient(five_wire, drive, yb, q), i, 2e-10)
        assert np.allclose(hess[:, i], fd, rtol=5e-5,
                           atol=1e-6 * np.max(np.abs(hess)))


def test_secular_frequencies_match_mathieu_relation(five_wire, drive, yb, null):
    tf = trap_frequencies(five_wire, drive, yb, null)
    f = tf.omegas / (2 * math.pi)
    # transverse pair is degenerate and far above the weak axial end effect
    assert f[1] == pytest.approx(f[2], rel=1e-3)
    assert f[0] < 0.05 * f[1]
    # at a field zero the pseudopotential curvature gives exactly
    # omega_t = q_mathieu * Omega / (2 sqrt(2))
    expected = tf.mathieu_q * drive.omega / (2 * math.sqrt(2))
    assert tf.omegas[2] == pytest.approx(expected, rel=1e-3)
    assert 4.0e6 < f[2] < 5.0e6
    # principal axes orthonormal
    assert np.allclose(tf.axes.T @ tf.axes, np.eye(3), atol=1e-12)


def test_mathieu_q_formula_and_magnitude(five_wire, drive, yb, null):
    tf = trap_frequencies(five_wire, drive, yb, null)
    volts = {"main_rf": drive.v_main, "tweaker_left": 0.0, "tweaker_right": 0.0}
    jac = set_field_jacobian(five_wire, volts, null)
    grad_max = np.max(np.abs(np.linalg.eigvalsh(jac)))
    expected = 2 * yb.charge * grad_max / (yb.mass * drive.omega**2)
    assert tf.mathieu_q == pytest.approx(expected, rel=1e-10)
    assert 0.25 < tf.mathieu_q < 0.35


def test_pseudo_regime_warning_above_q_limit(five_wire, yb, null):
    hot = RFDriveConfig(v_main=260.0, omega=OMEGA_RF)
    with pytest.warns(UserWarning, match="Mathieu q"):
        trap_frequencies(five_wire, hot, yb, null)


def test_secular_frequencies_with_axial_quadrupole(five_wire, drive, yb, null):
    omega_ax = 2 * math.pi * 0.5e6
    dc = DCField(omega_axial=omega_ax, center=tuple(null))
    tf0 = trap_frequencies(five_wire, drive, yb, null)
    tf = trap_frequencies(five_wire, drive, yb, null, dc=dc)
    assert tf.omegas[0] == pytest.approx(omega_ax, rel=5e-3)
    expected_t = math.sqrt(tf0.omegas[2] ** 2 - 0.5 * omega_ax**2)
    assert tf.omegas[2] == pytest.approx(expected_t, rel=1e-3)


def test_overstrong_axial_quadrupole_not_confining(five_wire, drive, yb, null):
    dc = DCField(omega_axial=2 * math.pi * 7e6, center=tuple(null))
    with pytest.raises(NotConfiningError) as err:
        trap_frequencies(five_wire, drive, yb, null, dc=dc)
    assert err.value.axis in ("y", "z")
    assert err.value.eigenvalue < 0.0


def test_equilibrium_sits_at_null_when_dc_is_centered(five_wire, drive, yb, null):
    dc = DCField(omega_axial=2 * math.pi * 0.5e6, center=tuple(null))
    eq = equilibrium_position(five_wire, drive, yb, null + 1e-7, dc=dc)
    assert np.max(np.abs(eq - null)) < 1e-12


def test_equilibrium_displacement_is_pushed_out(five_wire, drive, yb, null):
    # fixed DC minimum at the old null; the tweaker moves the RF null and the
    # anti-confining transverse part of the quadrupole amplifies the shift
    # by 1/(1 - r), r = (omega_ax/omega_t)^2 / 2
    omega_ax = 2 * math.pi * 0.5e6
    dc = DCField(omega_axial=omega_ax, center=tuple(null))
    tf0 = trap_frequencies(five_wire, drive, yb, null)
    r = 0.5 * (omega_ax / tf0.omegas[2]) ** 2
    shifted = find_rf_null(five_wire, drive_with_tweaker(drive, 10.0), null)
    eq = equilibrium_position(five_wire, drive_with_tweaker(drive, 10.0),
                              yb, shifted, dc=dc)
    ratio = (eq[2] - null[2]) / (shifted[2] - null[2])
    assert ratio == pytest.approx(1.0 / (1.0 - r), rel=0.01)
    assert ratio > 1.0


def test_tweaker_sign_flip_reverses_displacement(five_wire, drive, null):
    up = find_rf_null(five_wire, drive_with_tweaker(drive, 8.0), null)
    down = find_rf_null(five_wire, drive_with_tweaker(drive, -8.0), null)
    d_up = up[2] - null[2]
    d_down = down[2] - null[2]
    assert d_up > 0.0
    assert d_down < 0.0
    assert d_up == pytest.approx(-d_down, rel=0.02)


def test_drive_with_tweaker_phase_convention(drive):
    pos = drive_with_tweaker(drive, 6.0)
    neg = drive_with_tweaker(drive, -6.0)
    assert pos.v_tweaker_left == pos.v_tweaker_right == 6.0
    assert pos.phase_tweaker == 0.0
    assert neg.v_tweaker_left == 6.0
    assert neg.phase_tweaker == pytest.approx(-math.pi)


def test_negative_amplitude_rejected():
    with pytest.raises(ConfigError, match="non-negative"):
        RFDriveConfig(v_main=-5.0, omega=OMEGA_RF)


def test_height_curve_slope_and_linearity(five_wire, drive):
    volts = np.linspace(-10.0, 10.0, 9)
    curve = tweaker_height_curve(five_wire, drive, volts, (0.0, 0.0, 50 * UM))
    assert np.all(np.diff(curve.heights) > 0.0)
    assert curve.max_residual_fraction < 0.01
    slope_nm = curve.slope / 1e-9
    assert 0.75 * 37.0 < slope_nm < 1.25 * 37.0
    mid = curve.heights[4]
    assert curve.heights[8] - mid == pytest.approx(mid - curve.heights[0], rel=0.02)


def test_height_curve_needs_two_points(five_wire, drive):
    with pytest.raises(ConfigError):
        tweaker_height_curve(five_wire, drive, [1.0], (0.0, 0.0, 50 * UM))


def test_mismatched_phase_rejected_by_null_search(five_wire, drive):
    bad = RFDriveConfig(v_main=185.0, omega=OMEGA_RF, v_tweaker_left=5.0,
                        v_tweaker_right=5.0, phase_tweaker=math.pi / 2)
    with pytest.raises(PhaseMismatchError, match="phase"):
        find_rf_null(five_wire, bad, (0.0, 0.0, 50 * UM))


def test_pi_phase_accepted_by_null_search(five_wire, drive, null):
    find_rf_null(five_wire, drive_with_tweaker(drive, -5.0), null)


def _mismatch_drive(phase):
    return RFDriveConfig(v_main=185.0, omega=OMEGA_RF, v_tweaker_left=5.0,
                         v_tweaker_right=5.0, phase_tweaker=phase)


def test_phase_mismatch_micromotion_floor(five_wire, yb, null):
    amps = []
    for phase in (0.1, 0.4, math.pi / 2):
        res = phase_mismatch_micromotion(five_wire, _mismatch_drive(phase), yb, null)
        assert res.amplitude > 0.0
        assert res.field_magnitude > 0.0
        amps.append(res.amplitude)
    # worsens as the quadratures separate
    assert amps[0] < amps[1] < amps[2]
    # even in the phase
    mirrored = phase_mismatch_micromotion(five_wire, _mismatch_drive(-0.4), yb, null)
    assert mirrored.amplitude == pytest.approx(amps[1], rel=1e-6)
    # matched phase recovers an actual null
    matched = phase_mismatch_micromotion(five_wire, _mismatch_drive(0.0), yb, null)
    assert matched.amplitude < 1e-15


def test_phase_mismatch_search_box_too_small(five_wire, yb):
    with pytest.raises(SearchRegionError, match="search"):
        phase_mismatch_micromotion(five_wire, _mismatch_drive(math.pi / 2), yb,
                                   (0.0, 20 * UM, 30 * UM), search_halfwidth=1e-6)


def test_driven_amplitude_constant_and_identity(five_wire, drive, yb, null):
    # hand-evaluated q E / (m Omega^2) for 100 V/m at the shipped drive
    q = 1.602176634e-19
    m = 173.9388664 * 1.66053906660e-27
    a_ref = q * 100.0 / (m * OMEGA_RF**2)
    assert a_ref == pytest.approx(0.7779e-9, rel=1e-3)
    # the package computes the same amplitude from its own field phasor
    p = null + np.array([0.0, 0.0, 3 * UM])
    e = rf_field_phasor(five_wire, drive, p)
    a_z, beta = micromotion_amplitude(five_wire, drive, yb, p)
    assert a_z == pytest.approx(yb.charge * abs(e[2]) / (yb.mass * drive.omega**2),
                                rel=1e-12)
    assert beta == pytest.approx(yb.k * a_z, rel=1e-12)
    assert a_z > 0.0


def test_ion_species_validation():
    with pytest.raises(ConfigError):
        IonSpecies(name="bad", mass=-1.0, charge=1.6e-19,
                   wavelength=370e-9, gamma=1e8)
    yb = IonSpecies.yb174()
    assert yb.k == pytest.approx(2 * math.pi / yb.wavelength, rel=1e-15)


def test_dds_chain():
    cal = AmplifierCalibration(volts_per_code=0.05)
    assert dds_to_voltage(cal, 0) == 0.0
    # full scale would be 51.15 V; the amplifier rail clips it
    assert dds_to_voltage(cal, 1023) == 23.0
    assert dds_to_voltage(cal, 200) == pytest.approx(10.0, rel=1e-12)
    # 6.0206 dB is a factor of two in amplitude
    assert dds_to_voltage(cal, 200, attenuation_db=6.0206) == pytest.approx(5.0, rel=1e-4)
    assert dds_to_voltage(cal, 200, attenuation_db=20.0) == pytest.approx(1.0, rel=1e-12)
    assert pickoff_voltage(cal, 22.0) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ConfigError):
        dds_to_voltage(cal, -1)
    with pytest.raises(ConfigError):
        dds_to_voltage(cal, 1024)
    with pytest.raises(ConfigError):
        dds_to_voltage(cal, 100, attenuation_db=-1.0)
