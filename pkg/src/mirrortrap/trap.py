"""RF confinement: phasor fields, pseudopotential, null steering, secular motion.

The drive superposes two RF sources on shared frequency Omega: the main rail
pair and a weaker tweaker pair whose relative phase phi is ideally 0 (or pi,
which is just a sign). The complex field phasor is

    E(p) = E_main(p) + exp(i*phi) * E_tweaker(p)

and the time-averaged pseudopotential for a particle (q, m) is

    U_ps(p) = q^2 |E(p)|^2 / (4 m Omega^2).

Everything downstream (null location, secular frequencies, micromotion
amplitude) derives from this phasor and its analytic spatial derivatives.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import electrostatics as es
from .constants import AMU, C_LIGHT, E_CHARGE, HBAR, YB174_MASS, YB_P12_LINEWIDTH_HZ, YB_SP_WAVELENGTH
from .errors import (
    ConfigError,
    ConvergenceError,
    MissingVoltageError,
    NotConfiningError,
    PhaseMismatchError,
    SearchRegionError,
)
from .geometry import ROLE_GROUND, ROLE_MAIN_RF, ROLE_TWEAKER_LEFT, ROLE_TWEAKER_RIGHT

RF_NULL_FIELD_TOL = 1e-6   # |E| per volt of drive amplitude, V/m/V
NEWTON_ITER_CAP = 200
MATHIEU_Q_LIMIT = 0.4


@dataclass(frozen=True)
class IonSpecies:
    """Ion mass/charge plus the optical transition driven by the probe."""

    name: str
    mass: float          # kg
    charge: float        # C
    wavelength: float    # m, transition wavelength
    gamma: float         # rad/s, angular natural linewidth

    def __post_init__(self):
        for attr in ("mass", "charge", "wavelength", "gamma"):
            if getattr(self, attr) <= 0.0:
                raise ConfigError(f"IonSpecies.{attr} must be positive")

    @property
    def k(self):
        """Optical wavenumber 2*pi/lambda."""
        return 2.0 * math.pi / self.wavelength

    @property
    def i_sat(self):
        """Saturation intensity 2*pi^2*hbar*gamma*c/(3*lambda^3), W/m^2.

        Always derived from the stored transition parameters so it can never
        drift out of sync with them.
        """
        return 2.0 * math.pi**2 * HBAR * self.gamma * C_LIGHT / (3.0 * self.wavelength**3)

    @classmethod
    def yb174(cls):
        return cls(
            name="174Yb+",
            mass=YB174_MASS,
            charge=E_CHARGE,
            wavelength=YB_SP_WAVELENGTH,
            gamma=2.0 * math.pi * YB_P12_LINEWIDTH_HZ,
        )


@dataclass(frozen=True)
class RFDriveConfig:
    """Shared-frequency drive for the main rails and the tweaker pair.

    Amplitudes are non-negative; a sign flip is expressed as phase pi.
    ``tweaker_calibration`` scales both tweaker amplitudes and absorbs the
    roughly-10% stray-capacitance error of the feed network.
    """

    v_main: float                     # V
    omega: float                      # rad/s
    v_tweaker_left: float = 0.0       # V
    v_tweaker_right: float = 0.0      # V
    phase_tweaker: float = 0.0        # rad, in [-pi, pi)
    tweaker_calibration: float = 1.0

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("RFDriveConfig.omega must be positive")
        for attr in ("v_main", "v_tweaker_left", "v_tweaker_right"):
            if getattr(self, attr) < 0.0:
                raise ConfigError(
                    f"RFDriveConfig.{attr} must be non-negative; use phase_tweaker=pi for a sign flip"
                )
        if not (-math.pi <= self.phase_tweaker < math.pi):
            raise ConfigError("RFDriveConfig.phase_tweaker must lie in [-pi, pi)")

    @property
    def amplitude_scale(self):
        return max(
            self.v_main,
            self.v_tweaker_left * self.tweaker_calibration,
            self.v_tweaker_right * self.tweaker_calibration,
        )


@dataclass(frozen=True)
class AmplifierCalibration:
    """DDS-code -> RF-amplitude chain for the tweaker drive."""

    volts_per_code: float
    v_saturation: float = 23.0
    pickoff_ratio: float = 220.0
    full_scale_code: int = 1023

    def __post_init__(self):
        for attr in ("volts_per_code", "v_saturation", "pickoff_ratio"):
            if getattr(self, attr) <= 0.0:
                raise ConfigError(f"AmplifierCalibration.{attr} must be positive")


def dds_to_voltage(cal, code, attenuation_db=0.0):
    """RF amplitude for a DDS amplitude code through attenuator and amplifier.

    Linear in the code until the amplifier rail clips at v_saturation.
    """
    code = int(code)
    if not 0 <= code <= cal.full_scale_code:
        raise ConfigError(
            f"DDS code {code} outside 0..{cal.full_scale_code}"
        )
    if attenuation_db < 0.0:
        raise ConfigError("attenuation_db must be >= 0")
    v = cal.volts_per_code * code * 10.0 ** (-attenuation_db / 20.0)
    return min(cal.v_saturation, v)


def pickoff_voltage(cal, v_amplitude):
    """Amplitude seen at the monitoring pickoff for a given rail amplitude."""
    return v_amplitude / cal.pickoff_ratio


@dataclass(frozen=True)
class DCField:
    """Static confinement: explicit DC patch voltages plus an optional
    analytic axial quadrupole.

    The quadrupole stands in for a segmented-electrode solution when no DC
    layout is specified: U = m*omega_axial^2/2 * (x^2 - (y^2 + z^2)/2)
    around ``center``, which is Laplace-consistent (weak transverse defocus).
    """

    omega_axial: float = 0.0                 # rad/s
    center: tuple = (0.0, 0.0, 0.0)          # m
    voltages: dict = field(default_factory=dict)  # dc role -> V

    def _patch_voltage_map(self, electrode_set):
        vmap = {}
        for role in electrode_set.roles:
            if role == ROLE_GROUND:
                continue
            vmap[role] = float(self.voltages.get(role, 0.0))
        extra = set(self.voltages) - set(vmap)
        if extra:
            raise MissingVoltageError(
                f"DC voltage assigned for absent electrode role(s): {', '.join(sorted(extra))}"
            )
        return vmap

    def potential_energy(self, electrode_set, species, p):
        p = np.asarray(p, dtype=float)
        u = 0.0
        if self.voltages:
            u = species.charge * es.set_potential(
                electrode_set, self._patch_voltage_map(electrode_set), p
            )
        if self.omega_axial != 0.0:
            d = p - np.asarray(self.center)
            k = 0.5 * species.mass * self.omega_axial**2
            u = u + k * (d[..., 0] ** 2 - 0.5 * (d[..., 1] ** 2 + d[..., 2] ** 2))
        return u

    def gradient(self, electrode_set, species, p):
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.shape)
        if self.voltages:
            g = g - species.charge * es.set_field(
                electrode_set, self._patch_voltage_map(electrode_set), p
            )
        if self.omega_axial != 0.0:
            d = p - np.asarray(self.center)
            k = species.mass * self.omega_axial**2
            g = g + k * np.stack(
                [d[..., 0], -0.5 * d[..., 1], -0.5 * d[..., 2]], axis=-1
            )
        return g

    def hessian(self, electrode_set, species, p):
        p = np.asarray(p, dtype=float)
        h = np.zeros(p.shape[:-1] + (3, 3))
        if self.voltages:
            # Hess(q*phi) = -q * dE/dp
            h = h - species.charge * es.set_field_jacobian(
                electrode_set, self._patch_voltage_map(electrode_set), p
            )
        if self.omega_axial != 0.0:
            k = species.mass * self.omega_axial**2
            h = h + k * np.diag([1.0, -0.5, -0.5])
        return h


def _zero_voltage_map(electrode_set):
    return {role: 0.0 for role in electrode_set.roles if role != ROLE_GROUND}


def _rf_voltage_maps(electrode_set, drive):
    """Split the drive into (main map, tweaker map) over the present roles."""
    roles = electrode_set.roles
    if ROLE_MAIN_RF not in roles:
        raise MissingVoltageError("geometry has no main_rf patches to drive")
    main = _zero_voltage_map(electrode_set)
    main[ROLE_MAIN_RF] = drive.v_main
    tweak = _zero_voltage_map(electrode_set)
    cal = drive.tweaker_calibration
    for role, amp in (
        (ROLE_TWEAKER_LEFT, drive.v_tweaker_left),
        (ROLE_TWEAKER_RIGHT, drive.v_tweaker_right),
    ):
        if role in roles:
            tweak[role] = amp * cal
        elif amp != 0.0:
            raise MissingVoltageError(
                f"drive requests {role} amplitude {amp} V but the geometry has no such patch"
            )
    return main, tweak


def rf_field_phasor(electrode_set, drive, p):
    """Complex RF field amplitude E_main + exp(i*phi)*E_tweaker, shape (..., 3)."""
    main, tweak = _rf_voltage_maps(electrode_set, drive)
    e = es.set_field(electrode_set, main, p).astype(complex)
    if any(v != 0.0 for v in tweak.values()):
        e = e + np.exp(1j * drive.phase_tweaker) * es.set_field(electrode_set, tweak, p)
    return e


def _rf_jacobian_phasor(electrode_set, drive, p):
    main, tweak = _rf_voltage_maps(electrode_set, drive)
    j = es.set_field_jacobian(electrode_set, main, p).astype(complex)
    if any(v != 0.0 for v in tweak.values()):
        j = j + np.exp(1j * drive.phase_tweaker) * es.set_field_jacobian(
            electrode_set, tweak, p
        )
    return j


def _rf_second_phasor(electrode_set, drive, p):
    main, tweak = _rf_voltage_maps(electrode_set, drive)
    t = es.set_field_second(electrode_set, main, p).astype(complex)
    if any(v != 0.0 for v in tweak.values()):
        t = t + np.exp(1j * drive.phase_tweaker) * es.set_field_second(
            electrode_set, tweak, p
        )
    return t


def _pseudo_coeff(species, drive):
    return species.charge**2 / (4.0 * species.mass * drive.omega**2)


def pseudopotential(electrode_set, drive, species, p):
    """Time-averaged RF confinement energy q^2 |E|^2 / (4 m Omega^2), in J."""
    e = rf_field_phasor(electrode_set, drive, p)
    return _pseudo_coeff(species, drive) * np.sum(np.abs(e) ** 2, axis=-1)


def pseudopotential_gradient(electrode_set, drive, species, p):
    e = rf_field_phasor(electrode_set, drive, p)
    j = _rf_jacobian_phasor(electrode_set, drive, p)
    # d|E|^2/dp_i = 2 Re sum_k conj(E_k) dE_k/dp_i
    g = 2.0 * np.real(np.einsum("...k,...ki->...i", np.conj(e), j))
    return _pseudo_coeff(species, drive) * g


def pseudopotential_hessian(electrode_set, drive, species, p):
    e = rf_field_phasor(electrode_set, drive, p)
    j = _rf_jacobian_phasor(electrode_set, drive, p)
    t = _rf_second_phasor(electrode_set, drive, p)
    h = 2.0 * np.real(
        np.einsum("...ki,...kj->...ij", np.conj(j), j)
        + np.einsum("...k,...kij->...ij", np.conj(e), t)
    )
    return _pseudo_coeff(species, drive) * h


def mathieu_q(electrode_set, drive, species, p):
    """Largest-axis Mathieu stability parameter 2 q |dE/dp| / (m Omega^2)."""
    j = np.real(_rf_jacobian_phasor(electrode_set, drive, p))
    grad_max = np.max(np.abs(np.linalg.eigvalsh(j)))
    return 2.0 * species.charge * grad_max / (species.mass * drive.omega**2)


def _warn_if_outside_pseudo_regime(electrode_set, drive, species, p):
    q = mathieu_q(electrode_set, drive, species, p)
    if q >= MATHIEU_Q_LIMIT:
        warnings.warn(
            f"Mathieu q = {q:.3f} >= {MATHIEU_Q_LIMIT}: pseudopotential "
            "approximation is unreliable at this drive",
            stacklevel=3,
        )
    return q


def _phase_is_matched(phase):
    """True when exp(i*phase) is real, i.e. a fixed field zero can exist."""
    return abs(math.sin(phase)) < 1e-12


def _field_sq_objective(electrode_set, drive, p):
    e = rf_field_phasor(electrode_set, drive, p)
    return float(np.sum(np.abs(e) ** 2))


def _gauss_newton_min_field(electrode_set, drive, guess, bounds=None):
    """Damped Newton iteration on |E_phasor|^2 with backtracking.

    The (Gauss-)Newton model Hessian 2 Re(J^H J) is positive semidefinite; a
    Levenberg damping term handles its null directions (e.g. the axial
    direction of a translation-invariant rail pair). If a Newton step fails
    to descend, one coordinate-descent sweep is used as a fallback before
    giving up on the iteration.

    Returns (p, objective_value, iterations).
    """
    p = np.asarray(guess, dtype=float).copy()
    if p.shape != (3,):
        raise ValueError("guess must be a 3-vector")
    if p[2] <= 0.0:
        raise ValueError("guess must lie above the trap plane (z > 0)")

    def obj(q):
        if q[2] <= 0.0:
            return np.inf
        if bounds is not None and (np.any(q < bounds[0]) or np.any(q > bounds[1])):
            return np.inf
        return _field_sq_objective(electrode_set, drive, q)

    f = obj(p)
    lam = 1e-3
    length_scale = max(abs(p[2]), 1e-6)
    for it in range(NEWTON_ITER_CAP):
        e = rf_field_phasor(electrode_set, drive, p)
        j = _rf_jacobian_phasor(electrode_set, drive, p)
        g = 2.0 * np.real(np.conj(j).T @ e)
        h = 2.0 * np.real(np.conj(j).T @ j)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            return p, f, it
        scale = np.trace(h) / 3.0
        step = None
        try:
            step = np.linalg.solve(h + lam * scale * np.eye(3), -g)
        except np.linalg.LinAlgError:
            pass
        moved = False
        if step is not None:
            t = 1.0
            for _ in range(30):
                cand = p + t * step
                fc = obj(cand)
                if fc < f:
                    p, f = cand, fc
                    lam = max(lam / 3.0, 1e-12)
                    moved = True
                    break
                t *= 0.5
        if not moved:
            # coordinate-descent sweep: backtracking line search per axis
            lam = min(lam * 10.0, 1e6)
            for axis in range(3):
                d = np.zeros(3)
                d[axis] = -math.copysign(length_scale * 1e-3, g[axis]) if g[axis] != 0 else 0.0
                if d[axis] == 0.0:
                    continue
                t = 1.0
                for _ in range(40):
                    cand = p + t * d
                    fc = obj(cand)
                    if fc < f:
                        p, f = cand, fc
                        moved = True
                        break
                    t *= 0.5
        if not moved and gnorm * length_scale < 1e-30:
            return p, f, it
        if not moved:
            # stuck at (numerical) minimum
            return p, f, it
        if float(np.linalg.norm(step if step is not None else d)) < 1e-18:
            return p, f, it
    return p, f, NEWTON_ITER_CAP


def find_rf_null(electrode_set, drive, guess, field_tol=RF_NULL_FIELD_TOL):
    """Locate the RF field zero near ``guess``.

    Requires the tweaker phase to be 0 or pi (real phasor): with any other
    relative phase the two quadratures cannot vanish at a common point and
    no fixed null exists.
    """
    if not _phase_is_matched(drive.phase_tweaker):
        raise PhaseMismatchError(
            f"tweaker phase {drive.phase_tweaker:.6g} rad is not 0 or pi: "
            "the RF phasor has no fixed zero; see phase_mismatch_micromotion"
        )
    p, f, _ = _gauss_newton_min_field(electrode_set, drive, guess)
    vscale = max(drive.amplitude_scale, 1e-300)
    residual = math.sqrt(f)
    if residual / vscale > field_tol:
        raise ConvergenceError(
            f"RF null search stalled at |E| = {residual:.3e} V/m "
            f"({residual / vscale:.3e} V/m per volt; tolerance {field_tol:g})"
        )
    return p


def micromotion_amplitude(electrode_set, drive, species, p):
    """Driven z-motion amplitude a_z = q|E_z|/(m Omega^2) and beta = k a_z."""
    e = rf_field_phasor(electrode_set, drive, p)
    a_z = species.charge * float(np.abs(e[..., 2])) / (species.mass * drive.omega**2)
    return a_z, species.k * a_z


@dataclass(frozen=True)
class MismatchResult:
    position: np.ndarray
    amplitude: float        # residual micromotion amplitude, m
    field_magnitude: float  # |E_phasor| at the minimizer, V/m


def phase_mismatch_micromotion(electrode_set, drive, species, guess, search_halfwidth=50e-6):
    """Minimal achievable micromotion when the tweaker phase is off.

    Minimizes |E_phasor| over a box around ``guess`` and converts the residual
    to a drive amplitude q|E|/(m Omega^2). The full phasor magnitude is used:
    with mismatched phase no component zero is shared, and the total is the
    quantity bounded away from zero.
    """
    guess = np.asarray(guess, dtype=float)
    lo = guess - search_halfwidth
    hi = guess + search_halfwidth
    lo[2] = max(lo[2], 1e-9)
    p, f, _ = _gauss_newton_min_field(electrode_set, drive, guess, bounds=(lo, hi))
    margin = 1e-2 * search_halfwidth
    if np.any(p - lo < margin) or np.any(hi - p < margin):
        raise SearchRegionError(
            "field-magnitude minimizer ran into the search box; enlarge search_halfwidth"
        )
    mag = math.sqrt(f)
    amp = species.charge * mag / (species.mass * drive.omega**2)
    return MismatchResult(position=p, amplitude=amp, field_magnitude=mag)


def total_potential(electrode_set, drive, species, p, dc=None):
    u = pseudopotential(electrode_set, drive, species, p)
    if dc is not None:
        u = u + dc.potential_energy(electrode_set, species, p)
    return u


def total_gradient(electrode_set, drive, species, p, dc=None):
    g = pseudopotential_gradient(electrode_set, drive, species, p)
    if dc is not None:
        g = g + dc.gradient(electrode_set, species, p)
    return g


def total_hessian(electrode_set, drive, species, p, dc=None):
    h = pseudopotential_hessian(electrode_set, drive, species, p)
    if dc is not None:
        h = h + dc.hessian(electrode_set, species, p)
    return h


def equilibrium_position(electrode_set, drive, species, guess, dc=None, step_tol=1e-14):
    """Newton iteration on the total-potential gradient from ``guess``."""
    p = np.asarray(guess, dtype=float).copy()
    u = total_potential(electrode_set, drive, species, p, dc)
    for _ in range(NEWTON_ITER_CAP):
        g = total_gradient(electrode_set, drive, species, p, dc)
        h = total_hessian(electrode_set, drive, species, p, dc)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            step = -g * (p[2] / max(float(np.linalg.norm(g)), 1e-300)) * 1e-6
        t = 1.0
        moved = False
        for _ in range(40):
            cand = p + t * step
            if cand[2] > 0.0:
                uc = total_potential(electrode_set, drive, species, cand, dc)
                if uc <= u:
                    p, u = cand, uc
                    moved = True
                    break
            t *= 0.5
        if not moved or float(np.linalg.norm(step)) * t < step_tol:
            return p
    raise ConvergenceError("equilibrium search did not converge")


@dataclass(frozen=True)
class TrapFrequencies:
    omegas: np.ndarray        # rad/s, ascending
    axes: np.ndarray          # columns are the matching principal axes
    hessian: np.ndarray       # J/m^2
    mathieu_q: float


def trap_frequencies(electrode_set, drive, species, p, dc=None):
    """Secular frequencies and principal axes from the local curvature.

    The Hessian of pseudopotential plus DC energy is symmetrized analytically;
    a non-positive eigenvalue raises NotConfiningError naming the axis.
    """
    h = total_hessian(electrode_set, drive, species, p, dc)
    q = _warn_if_outside_pseudo_regime(electrode_set, drive, species, p)
    evals, evecs = np.linalg.eigh(h)
    if np.any(evals <= 0.0):
        i = int(np.argmin(evals))
        axis_names = "xyz"
        dominant = axis_names[int(np.argmax(np.abs(evecs[:, i])))]
        raise NotConfiningError(
            f"potential is not confining along the {dominant}-dominated axis "
            f"(curvature {evals[i]:.3e} J/m^2)",
            axis=dominant,
            eigenvalue=float(evals[i]),
        )
    omegas = np.sqrt(evals / species.mass)
    return TrapFrequencies(omegas=omegas, axes=evecs, hessian=h, mathieu_q=q)


@dataclass(frozen=True)
class HeightCurve:
    voltages: np.ndarray      # signed tweaker amplitude, V
    heights: np.ndarray       # null height, m
    nulls: np.ndarray         # full null positions, (n, 3)
    slope: float              # m/V from the linear fit
    intercept: float          # m
    residuals: np.ndarray     # m, heights - fit

    @property
    def max_residual_fraction(self):
        span = float(self.heights.max() - self.heights.min())
        if span == 0.0:
            return 0.0
        return float(np.max(np.abs(self.residuals))) / span


def drive_with_tweaker(drive, signed_voltage):
    """Tweaker pair driven symmetrically; negative voltage means phase pi."""
    amp = abs(float(signed_voltage))
    phase = 0.0 if signed_voltage >= 0.0 else -math.pi
    return replace(
        drive, v_tweaker_left=amp, v_tweaker_right=amp, phase_tweaker=phase
    )


def tweaker_height_curve(electrode_set, drive, tweaker_voltages, guess):
    """Null height versus symmetric tweaker amplitude, with a linear fit.

    Each null search warm-starts from the previous solution. Signed voltages
    are interpreted as amplitude with phase 0 (positive) or pi (negative).
    """
    volts = np.asarray(list(tweaker_voltages), dtype=float)
    if volts.size < 2:
        raise ConfigError("height curve needs at least two tweaker voltages")
    nulls = np.empty((volts.size, 3))
    p = np.asarray(guess, dtype=float)
    for i, v in enumerate(volts):
        p = find_rf_null(electrode_set, drive_with_tweaker(drive, v), p)
        nulls[i] = p
    heights = nulls[:, 2]
    slope, intercept = np.polyfit(volts, heights, 1)
    residuals = heights - (slope * volts + intercept)
    return HeightCurve(
        voltages=volts,
        heights=heights,
        nulls=nulls,
        slope=float(slope),
        intercept=float(intercept),
        residuals=residuals,
    )
