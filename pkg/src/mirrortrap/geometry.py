"""Electrode layout for a planar (gapless) surface trap.

Electrodes are axis-aligned rectangles in the z = 0 plane; everything not
covered by a patch is grounded metal. Inter-electrode gaps are assumed to
have been absorbed into the drawn rectangles (edges extended to the gap
midlines) before the layout reaches this module.

Roles are plain strings:

* ``main_rf``                 the RF rail pair
* ``tweaker_left``/``_right`` auxiliary RF electrodes for moving the null
* ``dc<N>``                   indexed static electrodes (dc0, dc1, ...)
* ``ground``                  explicitly drawn ground (0 V always)
"""
import re
from dataclasses import dataclass, field

from .errors import GeometryError, MissingVoltageError

ROLE_MAIN_RF = "main_rf"
ROLE_TWEAKER_LEFT = "tweaker_left"
ROLE_TWEAKER_RIGHT = "tweaker_right"
ROLE_GROUND = "ground"

_DC_RE = re.compile(r"^dc(\d+)$")
_FIXED_ROLES = {ROLE_MAIN_RF, ROLE_TWEAKER_LEFT, ROLE_TWEAKER_RIGHT, ROLE_GROUND}


def is_dc_role(role):
    return _DC_RE.match(role) is not None


def valid_role(role):
    return role in _FIXED_ROLES or is_dc_role(role)


@dataclass(frozen=True)
class ElectrodePatch:
    """Rectangle [x_min, x_max] x [y_min, y_max] at z = 0, in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    role: str

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(
                f"degenerate patch (role {self.role!r}): need x_min < x_max "
                f"and y_min < y_max, got x=({self.x_min}, {self.x_max}), "
                f"y=({self.y_min}, {self.y_max})"
            )
        if not valid_role(self.role):
            raise GeometryError(
                f"unknown electrode role {self.role!r}; expected main_rf, "
                "tweaker_left, tweaker_right, ground, or dc<N>"
            )

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def diagonal(self):
        dx = self.x_max - self.x_min
        dy = self.y_max - self.y_min
        return (dx * dx + dy * dy) ** 0.5

    def overlaps(self, other):
        """True if the open interiors intersect (shared edges are fine)."""
        return (
            self.x_min < other.x_max
            and other.x_min < self.x_max
            and self.y_min < other.y_max
            and other.y_min < self.y_max
        )


@dataclass
class ElectrodeSet:
    """A validated collection of non-overlapping patches."""

    patches: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        n = len(self.patches)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = self.patches[i], self.patches[j]
                if a.overlaps(b):
                    raise GeometryError(
                        f"patches {i} (role {a.role!r}) and {j} (role "
                        f"{b.role!r}) overlap"
                    )

    @property
    def roles(self):
        return {p.role for p in self.patches}

    def by_role(self, role):
        return [p for p in self.patches if p.role == role]

    def dc_roles(self):
        return sorted(r for r in self.roles if is_dc_role(r))

    def check_voltages(self, voltages):
        """Require an assignment for every non-ground role that is present.

        Unknown keys are rejected too, so a typoed dc index cannot silently
        drive nothing.
        """
        present = self.roles - {ROLE_GROUND}
        missing = sorted(present - set(voltages))
        if missing:
            raise MissingVoltageError(
                f"no voltage assigned for electrode role(s): {', '.join(missing)}"
            )
        unknown = sorted(set(voltages) - present - {ROLE_GROUND})
        if unknown:
            raise MissingVoltageError(
                f"voltage assigned for absent electrode role(s): {', '.join(unknown)}"
            )


def five_wire_electrodes(inner=30e-6, outer=87e-6, rail_length=8e-3,
                         tweaker_width=20e-6, tweaker_gap=5e-6,
                         tweaker_length=8e-3):
    """Standard five-wire layout with auxiliary null-steering electrodes.

    Two RF rails run along x with transverse extent inner < |y| < outer;
    for rails much longer than the ion height this traps at height
    sqrt(inner * outer) on the center line. One tweaker strip of width
    ``tweaker_width`` sits outside each rail, separated by ``tweaker_gap``
    (half the gap is absorbed into each neighbor, per the gapless model).
    The +y strip is ``tweaker_left``, the -y strip ``tweaker_right``. The
    region between the rails is drawn as explicit ground.
    """
    hx = rail_length / 2.0
    tx = tweaker_length / 2.0
    t_in = outer + tweaker_gap / 2.0
    t_out = t_in + tweaker_width
    return ElectrodeSet([
        ElectrodePatch(-hx, hx, inner, outer, ROLE_MAIN_RF),
        ElectrodePatch(-hx, hx, -outer, -inner, ROLE_MAIN_RF),
        ElectrodePatch(-tx, tx, t_in, t_out, ROLE_TWEAKER_LEFT),
        ElectrodePatch(-tx, tx, -t_out, -t_in, ROLE_TWEAKER_RIGHT),
        ElectrodePatch(-hx, hx, -inner, inner, ROLE_GROUND),
    ])
