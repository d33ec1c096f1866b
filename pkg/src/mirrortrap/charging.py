"""Laser-induced dielectric charging and its effect on the trap.

Scattered probe light deposits charge on exposed dielectric, modeled as a
Gaussian surface patch in the z = 0 plane,

    sigma(x, y) = Q / (pi sigma_r^2) * exp(-((x-x0)^2 + (y-y0)^2) / sigma_r^2)

with sigma_r = waist / sqrt(2) so the density profile follows the beam
intensity. The patch charge grows as dQ/dt = eta * P^gamma_exp with P the
optical power inside the waist. Its bare Coulomb field (the surrounding
conductor is not re-solved; the patch is treated as charge in free space
above the plane) pushes the ion off the RF null, and for large enough Q the
axial well splits into two displaced minima.

Field, potential, and curvature integrals over the patch run on a tensor
Gauss-Legendre grid spanning +-8 sigma_r, vectorized over field points.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import COULOMB_K
from .errors import ConfigError, TimestepError

GAUSS_ORDER = 80
PATCH_EXTENT_SIGMAS = 8.0
MAX_STEP_DISPLACEMENT = 1e-9   # m, Euler step sanity bound
INSTABILITY_DISPLACEMENT = 5e-6  # m, beyond this the trap model is void
POINT_CHUNK = 256


@dataclass(frozen=True)
class ChargingModelConfig:
    """Charging beam and deposition model."""

    i_peak: float               # W/m^2 at the beam center
    waist: float                # m, 1/e^2 intensity radius on the surface
    center: tuple = (0.0, 0.0)  # m, beam footprint center on the plane
    eta: float = 1e-11          # C/J deposited per optical energy (gamma_exp = 1)
    gamma_exp: float = 1.0      # power-law exponent of the deposition rate

    def __post_init__(self):
        if self.i_peak < 0.0:
            raise ConfigError("ChargingModelConfig.i_peak must be non-negative")
        if self.waist <= 0.0:
            raise ConfigError("ChargingModelConfig.waist must be positive")
        if self.eta < 0.0:
            raise ConfigError("ChargingModelConfig.eta must be non-negative")
        if self.gamma_exp <= 0.0:
            raise ConfigError("ChargingModelConfig.gamma_exp must be positive")
        if len(self.center) != 2:
            raise ConfigError("ChargingModelConfig.center must be (x, y)")

    @property
    def sigma_r(self):
        return self.waist / math.sqrt(2.0)

    @property
    def power_in_waist(self):
        """Optical power inside r < waist for a Gaussian beam, W."""
        return self.i_peak * (math.pi * self.waist**2 / 2.0) * (1.0 - math.exp(-2.0))

    @property
    def charging_rate(self):
        """dQ/dt in C/s."""
        return self.eta * self.power_in_waist**self.gamma_exp


@dataclass
class ChargePatchState:
    """Accumulated Gaussian charge patch on the surface."""

    charge: float               # C
    center: tuple = (0.0, 0.0)  # m
    sigma_r: float = 3.5e-6     # m

    @classmethod
    def from_config(cls, config, charge):
        return cls(charge=charge, center=tuple(config.center), sigma_r=config.sigma_r)


def _patch_nodes(state):
    """Quadrature nodes (x, y) and charge weights dq over the patch."""
    half = PATCH_EXTENT_SIGMAS * state.sigma_r
    t, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    xs = state.center[0] + half * t
    ys = state.center[1] + half * t
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    wx, wy = np.meshgrid(w * half, w * half, indexing="ij")
    r2 = (gx - state.center[0]) ** 2 + (gy - state.center[1]) ** 2
    density = state.charge / (math.pi * state.sigma_r**2) * np.exp(-r2 / state.sigma_r**2)
    dq = density * wx * wy
    return gx.ravel(), gy.ravel(), dq.ravel()


def _check_above_plane(points):
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != 3:
        raise ValueError("field points must have shape (..., 3)")
    if np.any(points[..., 2] <= 0.0):
        raise ValueError("patch integrals require z > 0")
    return points


def patch_charge_potential(state, points):
    """Electrostatic potential of the patch at points above the plane, V."""
    points = _check_above_plane(points)
    nx, ny, dq = _patch_nodes(state)
    flat = points.reshape(-1, 3)
    out = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], POINT_CHUNK):
        blk = flat[start:start + POINT_CHUNK]
        u = blk[:, 0, None] - nx
        v = blk[:, 1, None] - ny
        s = np.sqrt(u**2 + v**2 + blk[:, 2, None] ** 2)
        out[start:start + POINT_CHUNK] = np.sum(dq / s, axis=1)
    return COULOMB_K * out.reshape(points.shape[:-1])


def patch_charge_field(state, points):
    """Electric field of the patch at points above the plane, V/m."""
    points = _check_above_plane(points)
    nx, ny, dq = _patch_nodes(state)
    flat = points.reshape(-1, 3)
    out = np.empty((flat.shape[0], 3))
    for start in range(0, flat.shape[0], POINT_CHUNK):
        blk = flat[start:start + POINT_CHUNK]
        u = blk[:, 0, None] - nx
        v = blk[:, 1, None] - ny
        z = blk[:, 2, None]
        s3 = (u**2 + v**2 + z**2) ** 1.5
        out[start:start + POINT_CHUNK, 0] = np.sum(dq * u / s3, axis=1)
        out[start:start + POINT_CHUNK, 1] = np.sum(dq * v / s3, axis=1)
        out[start:start + POINT_CHUNK, 2] = np.sum(dq * z / s3, axis=1)
    return COULOMB_K * out.reshape(points.shape[:-1] + (3,))


def patch_charge_curvature_xx(state, point):
    """d^2 phi / dx^2 of the patch potential at one point, V/m^2."""
    point = _check_above_plane(np.asarray(point, dtype=float))
    nx, ny, dq = _patch_nodes(state)
    u = point[0] - nx
    v = point[1] - ny
    s2 = u**2 + v**2 + point[2] ** 2
    return COULOMB_K * float(np.sum(dq * (3.0 * u**2 - s2) / s2**2.5))


@dataclass
class ExposureRecord:
    """Time series of an exposure run."""

    times: np.ndarray           # s
    charges: np.ndarray         # C
    field_ez: np.ndarray        # V/m, vertical field at the ion
    displacements: np.ndarray   # m, quasi-static ion displacement
    field_rate: np.ndarray      # V/m/s, d(field_ez)/dt
    displacement_rate: np.ndarray  # m/s
    unstable: bool
    unit_field_ez: float        # V/m per C of patch charge
    meta: dict = field(default_factory=dict)


def accumulate_charge(config, duration, dt):
    """Euler integration of dQ/dt = eta * P^gamma_exp; returns (times, charges)."""
    if dt <= 0.0:
        raise ConfigError("charging timestep must be positive")
    if duration < dt:
        raise ConfigError("exposure duration must cover at least one step")
    n = int(math.ceil(duration / dt - 1e-12))
    times = dt * np.arange(n + 1)
    rate = config.charging_rate
    charges = np.concatenate([[0.0], np.cumsum(np.full(n, rate * dt))])
    return times, charges


def exposure_simulation(config, species, omega_z, duration, dt,
                        ion_position=(0.0, 0.0, 50e-6)):
    """Simulate charge build-up under the beam and the ion's response.

    The ion is pinned vertically with secular frequency ``omega_z``; the
    quasi-static displacement is q E_z / (m omega_z^2), valid while it stays
    small. A per-step displacement above 1 nm means the requested dt cannot
    resolve the drift and raises TimestepError; a total displacement beyond
    5 um ends the record early with ``unstable`` set, since the harmonic
    picture has broken down by then.
    """
    if omega_z <= 0.0:
        raise ConfigError("omega_z must be positive")
    times, charges = accumulate_charge(config, duration, dt)
    unit_state = ChargePatchState.from_config(config, 1.0)
    e_unit = float(patch_charge_field(unit_state, np.asarray(ion_position, dtype=float))[2])
    field_ez = charges * e_unit
    disp_per_field = species.charge / (species.mass * omega_z**2)
    displacements = disp_per_field * field_ez

    steps = np.abs(np.diff(displacements))
    if steps.size and steps.max() > MAX_STEP_DISPLACEMENT:
        raise TimestepError(
            f"per-step displacement {steps.max():.3e} m exceeds "
            f"{MAX_STEP_DISPLACEMENT:.0e} m; reduce dt")

    unstable = False
    over = np.nonzero(np.abs(displacements) > INSTABILITY_DISPLACEMENT)[0]
    if over.size:
        stop = over[0] + 1
        times = times[:stop]
        charges = charges[:stop]
        field_ez = field_ez[:stop]
        displacements = displacements[:stop]
        unstable = True

    if times.size >= 2:
        field_rate = np.gradient(field_ez, times)
        displacement_rate = np.gradient(displacements, times)
    else:
        field_rate = np.zeros_like(field_ez)
        displacement_rate = np.zeros_like(displacements)

    meta = {
        "charging_rate_c_per_s": config.charging_rate,
        "power_in_waist_w": config.power_in_waist,
        "ion_position_m": [float(c) for c in np.asarray(ion_position, dtype=float)],
        "omega_z_rad_s": float(omega_z),
        "dt_s": float(dt),
    }
    return ExposureRecord(
        times=times,
        charges=charges,
        field_ez=field_ez,
        displacements=displacements,
        field_rate=field_rate,
        displacement_rate=displacement_rate,
        unstable=unstable,
        unit_field_ez=e_unit,
        meta=meta,
    )


def _golden_section(f, lo, hi, tol):
    """Minimize a unimodal scalar function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass
class BifurcationResult:
    minima_x: np.ndarray        # m, refined minimum positions
    minima_energy: np.ndarray   # J
    bifurcated: bool
    threshold_charge: float     # C, curvature sign change of the on-axis well
    scan_x: np.ndarray
    scan_energy: np.ndarray


def axial_potential_minima(species, omega_x, state, height, y0=0.0,
                           halfwidth=50e-6, n_grid=2001):
    """Locate minima of the axial well deformed by the charge patch.

    U(x) = 1/2 m omega_x^2 x^2 + q phi_patch(x, y0, height). Below the
    threshold charge the origin-centered well survives; above it the on-axis
    curvature turns negative and two mirror minima appear. The threshold is
    reported from the per-unit-charge curvature regardless of the current
    state charge.
    """
    if omega_x <= 0.0:
        raise ConfigError("omega_x must be positive")
    if height <= 0.0:
        raise ConfigError("height must be positive")
    xs = np.linspace(-halfwidth, halfwidth, n_grid)
    points = np.stack([xs, np.full_like(xs, y0), np.full_like(xs, height)], axis=-1)
    spring = 0.5 * species.mass * omega_x**2
    energy = spring * xs**2 + species.charge * patch_charge_potential(state, points)

    def u_of(x):
        p = np.array([x, y0, height])
        return spring * x**2 + species.charge * float(patch_charge_potential(state, p))

    interior = np.nonzero((energy[1:-1] < energy[:-2]) & (energy[1:-1] < energy[2:]))[0] + 1
    minima = []
    tol = (xs[1] - xs[0]) * 1e-6
    for i in interior:
        minima.append(_golden_section(u_of, xs[i - 1], xs[i + 1], tol))
    minima = np.array(sorted(minima))
    minima_u = np.array([u_of(x) for x in minima])

    unit_state = ChargePatchState(charge=1.0, center=state.center, sigma_r=state.sigma_r)
    cxx_unit = patch_charge_curvature_xx(unit_state, np.array([0.0, y0, height]))
    if species.charge * cxx_unit < 0.0:
        threshold = -species.mass * omega_x**2 / (species.charge * cxx_unit)
    else:
        threshold = math.inf

    return BifurcationResult(
        minima_x=minima,
        minima_energy=minima_u,
        bifurcated=minima.size > 1,
        threshold_charge=threshold,
        scan_x=xs,
        scan_energy=energy,
    )
