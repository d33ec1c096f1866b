"""Analytic fields of rectangular electrodes in a gapless grounded plane.

A rectangle held at voltage v in an otherwise grounded z = 0 plane produces,
for z > 0,

    phi(p) = v/(2*pi) * sum_{i,j in {1,2}} (-1)^(i+j)
             * atan2((x_i - p.x)(y_j - p.y), p.z * R_ij)

with R_ij the distance from p to corner (x_i, y_j, 0). The atan2 form is
branch-safe for all sign combinations. The expression is harmonic, so the
derivative stack below (field, field Jacobian, second field derivatives) is
closed under the Laplace constraint: diagonal z-terms come from the traces.

All derivatives here are hand-derived closed forms; the test suite checks
every order against finite differences of the order below.

Total potentials are linear superpositions over patches, each weighted by its
role voltage (grounded regions contribute nothing).
"""
import numpy as np

from .geometry import ROLE_GROUND

TWO_PI = 2.0 * np.pi


def _split_point(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"expected point(s) of shape (..., 3), got {p.shape}")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any(z <= 0.0):
        raise ValueError("field point(s) must lie strictly above the plane (z > 0)")
    return x, y, z


def _corners(patch, px, py):
    """Yield (sign, u, v) for the four corner terms, u = x_c - p.x etc."""
    for i, xc in enumerate((patch.x_min, patch.x_max)):
        for j, yc in enumerate((patch.y_min, patch.y_max)):
            sign = 1.0 if (i + j) % 2 == 0 else -1.0
            yield sign, xc - px, yc - py


def patch_potential(patch, voltage, p):
    """Potential (V) of a single patch at point(s) p, z > 0."""
    px, py, z = _split_point(p)
    acc = 0.0
    for s, u, v in _corners(patch, px, py):
        r = np.sqrt(u * u + v * v + z * z)
        acc = acc + s * np.arctan2(u * v, z * r)
    return voltage / TWO_PI * acc


def patch_field(patch, voltage, p):
    """E = -grad(phi) of a single patch, shape (..., 3), V/m."""
    px, py, z = _split_point(p)
    z2 = z * z
    ex = 0.0
    ey = 0.0
    ez = 0.0
    for s, u, v in _corners(patch, px, py):
        a = u * u + z2
        b = v * v + z2
        r2 = u * u + v * v + z2
        r = np.sqrt(r2)
        ex = ex + s * z * v / (r * a)
        ey = ey + s * z * u / (r * b)
        ez = ez + s * u * v * (r2 + z2) / (r * a * b)
    scale = voltage / TWO_PI
    return np.stack([scale * ex, scale * ey, scale * ez], axis=-1)


def patch_field_jacobian(patch, voltage, p):
    """J_ij = dE_i/dp_j for a single patch, shape (..., 3, 3).

    Symmetric (E is a gradient field) and traceless (harmonic potential).
    """
    px, py, z = _split_point(p)
    z2 = z * z
    jxx = 0.0
    jyy = 0.0
    jxy = 0.0
    jxz = 0.0
    jyz = 0.0
    for s, u, v in _corners(patch, px, py):
        u2 = u * u
        v2 = v * v
        a = u2 + z2
        b = v2 + z2
        r2 = u2 + v2 + z2
        r = np.sqrt(r2)
        r3 = r * r2
        uv = u * v
        # second derivatives f_ij of the corner term; J_ij = -V/2pi * sum s*f_ij
        jxx = jxx + s * (-z * uv * (a + 2.0 * r2) / (r3 * a * a))
        jyy = jyy + s * (-z * uv * (b + 2.0 * r2) / (r3 * b * b))
        jxy = jxy + s * (z / r3)
        jxz = jxz + s * (-v * (a * (u2 + v2) - 2.0 * z2 * r2) / (r3 * a * a))
        jyz = jyz + s * (-u * (b * (u2 + v2) - 2.0 * z2 * r2) / (r3 * b * b))
    scale = -voltage / TWO_PI
    jxx = scale * jxx
    jyy = scale * jyy
    jxy = scale * jxy
    jxz = scale * jxz
    jyz = scale * jyz
    jzz = -(jxx + jyy)
    row_x = np.stack([jxx, jxy, jxz], axis=-1)
    row_y = np.stack([jxy, jyy, jyz], axis=-1)
    row_z = np.stack([jxz, jyz, jzz], axis=-1)
    return np.stack([row_x, row_y, row_z], axis=-2)


def patch_field_second(patch, voltage, p):
    """T_kij = d2E_k/dp_i dp_j for a single patch, shape (..., 3, 3, 3).

    Fully symmetric in all three indices; built from four independent corner
    third-derivatives plus symmetry and the harmonic traces.
    """
    px, py, z = _split_point(p)
    z2 = z * z
    fxxx = 0.0
    fyyy = 0.0
    fxxz = 0.0
    fyyz = 0.0
    fxxy = 0.0
    fxyy = 0.0
    fxyz = 0.0
    for s, u, v in _corners(patch, px, py):
        u2 = u * u
        v2 = v * v
        a = u2 + z2
        b = v2 + z2
        r2 = u2 + v2 + z2
        r = np.sqrt(r2)
        r3 = r * r2
        r5 = r3 * r2
        a2 = a * a
        b2 = b * b
        ta = a + 2.0 * r2
        tb = b + 2.0 * r2
        fxxx = fxxx + s * (-z * v) * (
            (-ta - 6.0 * u2) / (r3 * a2)
            + u2 * ta * (3.0 / (r5 * a2) + 4.0 / (r3 * a2 * a))
        )
        fyyy = fyyy + s * (-z * u) * (
            (-tb - 6.0 * v2) / (r3 * b2)
            + v2 * tb * (3.0 / (r5 * b2) + 4.0 / (r3 * b2 * b))
        )
        fxxz = fxxz + s * (-u * v) * (
            ta / (r3 * a2)
            + 6.0 * z2 / (r3 * a2)
            - 3.0 * z2 * ta / (r5 * a2)
            - 4.0 * z2 * ta / (r3 * a2 * a)
        )
        fyyz = fyyz + s * (-u * v) * (
            tb / (r3 * b2)
            + 6.0 * z2 / (r3 * b2)
            - 3.0 * z2 * tb / (r5 * b2)
            - 4.0 * z2 * tb / (r3 * b2 * b)
        )
        fxxy = fxxy + s * (3.0 * u * z / r5)
        fxyy = fxyy + s * (3.0 * v * z / r5)
        fxyz = fxyz + s * ((r2 - 3.0 * z2) / r5)
    scale = -voltage / TWO_PI
    fxxx = scale * fxxx
    fyyy = scale * fyyy
    fxxz = scale * fxxz
    fyyz = scale * fyyz
    fxxy = scale * fxxy
    fxyy = scale * fxyy
    fxyz = scale * fxyz
    # harmonicity: the trace over any repeated pair vanishes
    fzzx = -(fxxx + fxyy)
    fzzy = -(fxxy + fyyy)
    fzzz = -(fxxz + fyyz)

    shape = np.broadcast(px, py, z).shape
    t = np.empty(shape + (3, 3, 3))
    comp = {
        (0, 0, 0): fxxx,
        (0, 0, 1): fxxy,
        (0, 0, 2): fxxz,
        (0, 1, 1): fxyy,
        (0, 1, 2): fxyz,
        (0, 2, 2): fzzx,
        (1, 1, 1): fyyy,
        (1, 1, 2): fyyz,
        (1, 2, 2): fzzy,
        (2, 2, 2): fzzz,
    }
    for (i, j, k), val in comp.items():
        for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            t[..., perm[0], perm[1], perm[2]] = val
    return t


def _patch_voltage(patch, voltages):
    if patch.role == ROLE_GROUND:
        return 0.0
    return voltages[patch.role]


def superpose(electrode_set, voltages, p):
    """Total (potential, field) for a role -> voltage map.

    Every non-ground role present in the set must be assigned, and no absent
    role may be assigned; see ElectrodeSet.check_voltages.
    """
    electrode_set.check_voltages(voltages)
    p = np.asarray(p, dtype=float)
    phi = 0.0
    field = np.zeros(p.shape)
    for patch in electrode_set.patches:
        v = _patch_voltage(patch, voltages)
        if v == 0.0:
            continue
        phi = phi + patch_potential(patch, v, p)
        field = field + patch_field(patch, v, p)
    return phi, field


def set_potential(electrode_set, voltages, p):
    electrode_set.check_voltages(voltages)
    phi = 0.0
    for patch in electrode_set.patches:
        v = _patch_voltage(patch, voltages)
        if v != 0.0:
            phi = phi + patch_potential(patch, v, p)
    return phi


def set_field(electrode_set, voltages, p):
    electrode_set.check_voltages(voltages)
    p = np.asarray(p, dtype=float)
    field = np.zeros(p.shape)
    for patch in electrode_set.patches:
        v = _patch_voltage(patch, voltages)
        if v != 0.0:
            field = field + patch_field(patch, v, p)
    return field


def set_field_jacobian(electrode_set, voltages, p):
    electrode_set.check_voltages(voltages)
    p = np.asarray(p, dtype=float)
    jac = np.zeros(p.shape[:-1] + (3, 3))
    for patch in electrode_set.patches:
        v = _patch_voltage(patch, voltages)
        if v != 0.0:
            jac = jac + patch_field_jacobian(patch, v, p)
    return jac


def set_field_second(electrode_set, voltages, p):
    electrode_set.check_voltages(voltages)
    p = np.asarray(p, dtype=float)
    sec = np.zeros(p.shape[:-1] + (3, 3, 3))
    for patch in electrode_set.patches:
        v = _patch_voltage(patch, voltages)
        if v != 0.0:
            sec = sec + patch_field_second(patch, v, p)
    return sec
