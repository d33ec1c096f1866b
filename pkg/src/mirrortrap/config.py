"""Run configuration: one YAML file with explicit units, many commands.

Keys carry their unit as a suffix (``_um``, ``_mhz``, ``_ms``, ``_mw_cm2``,
``_v``, ...) and are converted to SI on load. Parsing is strict: unknown
keys in any parsed section are rejected, so a mistyped unit suffix cannot
silently fall back to a default. Every value keeps its YAML line number so
diagnostics can point at the offending entry.
"""
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .constants import AMU, E_CHARGE
from .errors import ConfigError, MirrortrapError
from .geometry import ElectrodePatch, ElectrodeSet
from .trap import AmplifierCalibration, IonSpecies, RFDriveConfig
from .fluorescence import MeasurementProtocol, StandingWaveConfig
from .charging import ChargingModelConfig

TWO_PI = 2.0 * math.pi
_MISSING = object()

BUILTIN_GEOMETRIES = ("five_wire",)


class MarkedDict(dict):
    """dict that remembers the YAML line of the mapping and of each key."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.marks = {}
        self.line = None


class _MarkedLoader(yaml.SafeLoader):
    pass


def _construct_marked_mapping(loader, node):
    out = MarkedDict()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.marks[key] = key_node.start_mark.line + 1
    return out


_MarkedLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_marked_mapping)


def _load_yaml(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.load(fh, Loader=_MarkedLoader)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", filename=str(path))
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"malformed YAML: {exc}", filename=str(path), line=line)
    if data is None:
        data = MarkedDict()
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", filename=str(path))
    return data


class Section:
    """Typed, strict access to one mapping of the config file."""

    def __init__(self, data, filename, name):
        if data is None:
            data = MarkedDict()
        if not isinstance(data, dict):
            raise ConfigError(f"section '{name}' must be a mapping", filename)
        self.data = data
        self.filename = filename
        self.name = name
        self._seen = set()

    def line(self, key=None):
        marks = getattr(self.data, "marks", {})
        if key is not None and key in marks:
            return marks[key]
        return getattr(self.data, "line", None)

    def error(self, key, message):
        label = f"{self.name}.{key}" if key else self.name
        raise ConfigError(f"{label}: {message}", self.filename, self.line(key))

    def has(self, key):
        return key in self.data

    def raw(self, key, default=_MISSING):
        self._seen.add(key)
        if key in self.data:
            return self.data[key]
        if default is _MISSING:
            self.error(key, "required key is missing")
        return default

    def number(self, key, default=_MISSING, minimum=None, maximum=None,
               positive=False, scale=1.0):
        value = self.raw(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(key, f"expected a number, got {value!r}")
        value = float(value)
        if positive and value <= 0.0:
            self.error(key, f"must be positive, got {value}")
        if minimum is not None and value < minimum:
            self.error(key, f"must be >= {minimum}, got {value}")
        if maximum is not None and value > maximum:
            self.error(key, f"must be <= {maximum}, got {value}")
        return value * scale

    def integer(self, key, default=_MISSING, minimum=None, maximum=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(key, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.error(key, f"must be >= {minimum}, got {value}")
        if maximum is not None and value > maximum:
            self.error(key, f"must be <= {maximum}, got {value}")
        return int(value)

    def boolean(self, key, default=_MISSING):
        value = self.raw(key, default)
        if value is None:
            return None
        if not isinstance(value, bool):
            self.error(key, f"expected true/false, got {value!r}")
        return bool(value)

    def string(self, key, default=_MISSING, choices=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            self.error(key, f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            self.error(key, f"expected one of {sorted(choices)}, got {value!r}")
        return value

    def numbers(self, key, count, default=_MISSING, scale=1.0):
        value = self.raw(key, default)
        if value is None:
            return None
        if (not isinstance(value, (list, tuple))
                or len(value) != count
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
            self.error(key, f"expected a list of {count} numbers, got {value!r}")
        return tuple(float(v) * scale for v in value)

    def strings(self, key, default=_MISSING, choices=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if not isinstance(value, (list, tuple)) or any(not isinstance(v, str) for v in value):
            self.error(key, f"expected a list of strings, got {value!r}")
        if choices is not None:
            for v in value:
                if v not in choices:
                    self.error(key, f"expected entries from {sorted(choices)}, got {v!r}")
        return tuple(value)

    def mapping(self, key, default=_MISSING):
        value = self.raw(key, default)
        if value is None:
            return None
        if not isinstance(value, dict):
            self.error(key, f"expected a mapping, got {value!r}")
        return value

    def subsection(self, key, required=False):
        value = self.raw(key, _MISSING if required else None)
        if value is None:
            return None
        return Section(value, self.filename, f"{self.name}.{key}")

    def finish(self):
        unknown = sorted(set(self.data) - self._seen)
        if unknown:
            self.error(unknown[0], "unknown key (check the unit suffix)")


def _frequency(section, key, default=_MISSING, signed=False, positive=False):
    """Read an ordinary frequency in MHz; return angular rad/s."""
    minimum = None if signed else 0.0
    value = section.number(key, default, minimum=minimum, positive=positive)
    if value is None:
        return None
    return TWO_PI * 1e6 * value


def load_geometry(spec, base_dir):
    """Load an electrode layout from a YAML file or a builtin name."""
    if spec in BUILTIN_GEOMETRIES:
        ref = resources.files("mirrortrap").joinpath("data", f"{spec}.yaml")
        with resources.as_file(ref) as path:
            return _parse_geometry(_load_yaml(path), str(path)), f"builtin:{spec}"
    path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
    return _parse_geometry(_load_yaml(path), path), path


def _parse_geometry(data, filename):
    top = Section(data, filename, "geometry")
    entries = top.raw("patches")
    top.finish()
    if not isinstance(entries, list) or not entries:
        top.error("patches", "expected a non-empty list of patch mappings")
    patches = []
    for i, entry in enumerate(entries):
        sec = Section(entry, filename, f"patches[{i}]")
        role = sec.string("role")
        x = sec.numbers("x_um", 2, scale=1e-6)
        y = sec.numbers("y_um", 2, scale=1e-6)
        sec.finish()
        try:
            patches.append(ElectrodePatch(x[0], x[1], y[0], y[1], role))
        except ConfigError as exc:
            raise ConfigError(str(exc), filename, sec.line()) from exc
    try:
        return ElectrodeSet(patches)
    except ConfigError as exc:
        raise ConfigError(str(exc), filename, top.line("patches")) from exc


def build_species(sec):
    if sec.has("name"):
        name = sec.string("name", choices=("yb174",))
        sec.finish()
        return IonSpecies.yb174() if name == "yb174" else None
    mass = sec.number("mass_u", positive=True, scale=AMU)
    charge = sec.number("charge_e", positive=True, scale=E_CHARGE)
    wavelength = sec.number("wavelength_nm", positive=True, scale=1e-9)
    gamma = _frequency(sec, "linewidth_mhz", positive=True)
    sec.finish()
    return IonSpecies(name="custom", mass=mass, charge=charge,
                      wavelength=wavelength, gamma=gamma)


def build_drive(sec):
    v_main = sec.number("v_main_v", minimum=0.0)
    omega = _frequency(sec, "frequency_mhz", positive=True)
    calibration = sec.number("tweaker_calibration", 1.0, positive=True)
    if sec.has("tweaker_v"):
        if sec.has("tweaker_left_v") or sec.has("tweaker_right_v"):
            sec.error("tweaker_v", "give either tweaker_v (symmetric) or the "
                                   "left/right pair, not both")
        signed = sec.number("tweaker_v", 0.0)
        sec.finish()
        amp = abs(signed)
        phase = 0.0 if signed >= 0.0 else -math.pi
        return RFDriveConfig(v_main=v_main, omega=omega, v_tweaker_left=amp,
                             v_tweaker_right=amp, phase_tweaker=phase,
                             tweaker_calibration=calibration)
    left = sec.number("tweaker_left_v", 0.0, minimum=0.0)
    right = sec.number("tweaker_right_v", 0.0, minimum=0.0)
    phase = sec.number("tweaker_phase_rad", 0.0)
    sec.finish()
    if not -math.pi <= phase < math.pi:
        sec.error("tweaker_phase_rad", f"must lie in [-pi, pi), got {phase}")
    return RFDriveConfig(v_main=v_main, omega=omega, v_tweaker_left=left,
                         v_tweaker_right=right, phase_tweaker=phase,
                         tweaker_calibration=calibration)


def build_standing_wave(sec):
    i_peak = sec.number("intensity_mw_cm2", minimum=0.0, scale=10.0)
    detuning = _frequency(sec, "detuning_mhz", signed=True)
    waist = sec.number("waist_um", positive=True, scale=1e-6)
    background = sec.number("background_cps", 0.0, minimum=0.0)
    node_offset = sec.number("node_offset_nm", 0.0, scale=1e-9)
    efficiency = sec.number("collection_efficiency", 1.0, positive=True, maximum=1.0)
    sec.finish()
    return StandingWaveConfig(i_peak=i_peak, detuning=detuning, waist=waist,
                              background_rate=background, node_offset=node_offset,
                              collection_efficiency=efficiency)


def build_protocol(sec, seed):
    exposure = sec.number("exposure_ms", positive=True, scale=1e-3)
    repeats = sec.integer("repeats", minimum=1)
    synthesize = sec.boolean("synthesize", True)
    sec.finish()
    return MeasurementProtocol(exposure=exposure, repeats=repeats,
                               rng_seed=seed, synthesize=synthesize)


def build_amplifier(sec):
    volts_per_code = sec.number("volts_per_code", 0.05, positive=True)
    saturation = sec.number("saturation_v", 23.0, positive=True)
    pickoff = sec.number("pickoff_ratio", 220.0, positive=True)
    full_scale = sec.integer("full_scale_code", 1023, minimum=1)
    sec.finish()
    return AmplifierCalibration(volts_per_code=volts_per_code,
                                v_saturation=saturation,
                                pickoff_ratio=pickoff,
                                full_scale_code=full_scale)


def build_dc_params(sec):
    omega_axial = _frequency(sec, "axial_frequency_mhz", 0.0)
    center = sec.numbers("center_um", 3, None, scale=1e-6)
    raw_voltages = sec.mapping("voltages", None) or {}
    sec.finish()
    voltages = {}
    for role, value in raw_voltages.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            sec.error("voltages", f"voltage for {role!r} must be a number")
        voltages[str(role)] = float(value)
    return {"omega_axial": omega_axial, "center": center, "voltages": voltages}


def _scan_grid(sec, lo_key, hi_key, points_key, default_points, min_points,
               scale=1.0, extra=None):
    lo = sec.number(lo_key, scale=scale)
    hi = sec.number(hi_key, scale=scale)
    points = sec.integer(points_key, default_points, minimum=min_points)
    if hi <= lo:
        sec.error(hi_key, f"must exceed {lo_key}")
    grid = {"values": np.linspace(lo, hi, points)}
    if extra:
        grid.update(extra(sec))
    sec.finish()
    return grid


def build_scans(sec):
    scans = {}
    sub = sec.subsection("height_curve")
    if sub is not None:
        scans["height_curve"] = _scan_grid(
            sub, "tweaker_min_v", "tweaker_max_v", "points", 9, 2)
    sub = sec.subsection("fringe")
    if sub is not None:
        scans["fringe"] = _scan_grid(
            sub, "tweaker_min_v", "tweaker_max_v", "points", 81, 4)
    sub = sec.subsection("lineshape")
    if sub is not None:
        scans["lineshape"] = _scan_grid(
            sub, "detuning_min_mhz", "detuning_max_mhz", "points", 41, 1,
            scale=TWO_PI * 1e6,
            extra=lambda s: {"micromotion": s.number("micromotion_nm",
                                                     minimum=0.0, scale=1e-9)})
    sec.finish()
    return scans


def build_fit_options(sec):
    input_path = sec.string("input", None)
    free = sec.strings("free", ("a_z", "background"),
                       choices=("a_z", "scale", "offset", "background"))
    sec.finish()
    return {"input": input_path, "free": free}


def build_charging(sec):
    model = ChargingModelConfig(
        i_peak=sec.number("intensity_mw_cm2", minimum=0.0, scale=10.0),
        waist=sec.number("waist_um", positive=True, scale=1e-6),
        center=sec.numbers("beam_center_um", 2, (0.0, 0.0), scale=1e-6),
        eta=sec.number("eta_c_per_j", 1e-11, minimum=0.0),
        gamma_exp=sec.number("exponent", 1.0, positive=True),
    )
    duration = sec.number("duration_s", positive=True)
    dt = sec.number("dt_s", positive=True)
    charge_e = sec.number("charge_e", None, minimum=0.0)
    halfwidth = sec.number("scan_halfwidth_um", 50.0, positive=True, scale=1e-6)
    grid_points = sec.integer("grid_points", 2001, minimum=11)
    sec.finish()
    return {
        "model": model,
        "duration": duration,
        "dt": dt,
        "charge": None if charge_e is None else charge_e * E_CHARGE,
        "halfwidth": halfwidth,
        "grid_points": grid_points,
    }


@dataclass
class RunConfig:
    source: str
    seed: int
    output_dir: str
    geometry: ElectrodeSet
    geometry_source: str
    species: IonSpecies
    drive: RFDriveConfig
    standing_wave: object
    protocol: object
    amplifier: object
    dc_params: dict
    scans: dict
    fit_options: dict
    charging: dict
    resolved: dict

    def require(self, attr, section, command):
        value = getattr(self, attr)
        if value is None:
            raise ConfigError(
                f"section '{section}' is required for command '{command}'",
                filename=self.source)
        return value

    def require_scan(self, name, command):
        if name not in self.scans:
            raise ConfigError(
                f"section 'scans.{name}' is required for command '{command}'",
                filename=self.source)
        return self.scans[name]


_TOP_KEYS = ("geometry", "seed", "output_dir", "species", "drive", "dc",
             "standing_wave", "protocol", "amplifier", "scans", "fit", "charging")


def load_config(path, seed_override=None, out_override=None):
    """Parse and resolve a run configuration file."""
    data = _load_yaml(path)
    filename = str(path)
    top = Section(data, filename, "config")

    seed = top.integer("seed", 12345, minimum=0)
    if seed_override is not None:
        seed = int(seed_override)
    output_dir = top.string("output_dir", "out")
    if out_override is not None:
        output_dir = str(out_override)

    geometry_spec = top.string("geometry")
    geometry, geometry_source = load_geometry(geometry_spec,
                                              os.path.dirname(filename) or ".")

    species = build_species(Section(top.raw("species"), filename, "species"))
    drive = build_drive(Section(top.raw("drive"), filename, "drive"))

    standing_wave = protocol = amplifier = None
    dc_params = fit_options = charging = None
    scans = {}
    if top.has("standing_wave"):
        standing_wave = build_standing_wave(
            Section(top.raw("standing_wave"), filename, "standing_wave"))
    if top.has("protocol"):
        protocol = build_protocol(
            Section(top.raw("protocol"), filename, "protocol"), seed)
    if top.has("amplifier"):
        amplifier = build_amplifier(
            Section(top.raw("amplifier"), filename, "amplifier"))
    if top.has("dc"):
        dc_params = build_dc_params(Section(top.raw("dc"), filename, "dc"))
    if top.has("scans"):
        scans = build_scans(Section(top.raw("scans"), filename, "scans"))
    if top.has("fit"):
        fit_options = build_fit_options(Section(top.raw("fit"), filename, "fit"))
    if top.has("charging"):
        charging = build_charging(Section(top.raw("charging"), filename, "charging"))
    top.finish()

    cfg = RunConfig(
        source=filename,
        seed=seed,
        output_dir=output_dir,
        geometry=geometry,
        geometry_source=geometry_source,
        species=species,
        drive=drive,
        standing_wave=standing_wave,
        protocol=protocol,
        amplifier=amplifier,
        dc_params=dc_params,
        scans=scans,
        fit_options=fit_options,
        charging=charging,
        resolved={},
    )
    cfg.resolved = _resolve(cfg)
    return cfg


def _resolve(cfg):
    """Plain nested dict of the configuration in SI units, for provenance."""
    out = {
        "seed": cfg.seed,
        "geometry": {
            "source": cfg.geometry_source,
            "patches": [
                {"role": p.role, "x_m": [p.x_min, p.x_max], "y_m": [p.y_min, p.y_max]}
                for p in cfg.geometry.patches
            ],
        },
        "species": {
            "name": cfg.species.name,
            "mass_kg": cfg.species.mass,
            "charge_c": cfg.species.charge,
            "wavelength_m": cfg.species.wavelength,
            "gamma_rad_s": cfg.species.gamma,
        },
        "drive": {
            "v_main_v": cfg.drive.v_main,
            "omega_rad_s": cfg.drive.omega,
            "v_tweaker_left_v": cfg.drive.v_tweaker_left,
            "v_tweaker_right_v": cfg.drive.v_tweaker_right,
            "phase_tweaker_rad": cfg.drive.phase_tweaker,
            "tweaker_calibration": cfg.drive.tweaker_calibration,
        },
    }
    if cfg.standing_wave is not None:
        sw = cfg.standing_wave
        out["standing_wave"] = {
            "i_peak_w_m2": sw.i_peak,
            "detuning_rad_s": sw.detuning,
            "waist_m": sw.waist,
            "background_cps": sw.background_rate,
            "node_offset_m": sw.node_offset,
            "collection_efficiency": sw.collection_efficiency,
        }
    if cfg.protocol is not None:
        out["protocol"] = {
            "exposure_s": cfg.protocol.exposure,
            "repeats": cfg.protocol.repeats,
            "rng_seed": cfg.protocol.rng_seed,
            "synthesize": cfg.protocol.synthesize,
        }
    if cfg.amplifier is not None:
        amp = cfg.amplifier
        out["amplifier"] = {
            "volts_per_code": amp.volts_per_code,
            "v_saturation": amp.v_saturation,
            "pickoff_ratio": amp.pickoff_ratio,
            "full_scale_code": amp.full_scale_code,
        }
    if cfg.dc_params is not None:
        out["dc"] = {
            "omega_axial_rad_s": cfg.dc_params["omega_axial"],
            "center_m": None if cfg.dc_params["center"] is None
            else list(cfg.dc_params["center"]),
            "voltages_v": dict(sorted(cfg.dc_params["voltages"].items())),
        }
    if cfg.scans:
        out["scans"] = {}
        for name, grid in sorted(cfg.scans.items()):
            entry = {"values": [float(v) for v in grid["values"]]}
            if "micromotion" in grid:
                entry["micromotion_m"] = grid["micromotion"]
            out["scans"][name] = entry
    if cfg.fit_options is not None:
        out["fit"] = {"input": cfg.fit_options["input"],
                      "free": list(cfg.fit_options["free"])}
    if cfg.charging is not None:
        ch = cfg.charging
        out["charging"] = {
            "i_peak_w_m2": ch["model"].i_peak,
            "waist_m": ch["model"].waist,
            "beam_center_m": list(ch["model"].center),
            "eta_c_per_j": ch["model"].eta,
            "exponent": ch["model"].gamma_exp,
            "duration_s": ch["duration"],
            "dt_s": ch["dt"],
            "charge_c": ch["charge"],
            "scan_halfwidth_m": ch["halfwidth"],
            "grid_points": ch["grid_points"],
        }
    return out


def validate_config(path):
    """Collect diagnostics for every section of a config file.

    Unlike load_config, this keeps going after the first problem and never
    raises for content errors; the list of human-readable diagnostics is the
    result. An empty list means load_config would succeed and every section
    present is internally consistent.
    """
    diagnostics = []
    try:
        data = _load_yaml(path)
    except ConfigError as exc:
        return [str(exc)]
    filename = str(path)
    top = Section(data, filename, "config")

    def attempt(fn):
        try:
            fn()
        except MirrortrapError as exc:
            diagnostics.append(str(exc))

    attempt(lambda: top.integer("seed", 12345, minimum=0))
    attempt(lambda: top.string("output_dir", "out"))

    def check_geometry():
        spec = top.string("geometry")
        load_geometry(spec, os.path.dirname(filename) or ".")

    attempt(check_geometry)

    required = {"species": build_species, "drive": build_drive}
    for name, builder in required.items():
        if top.has(name):
            attempt(lambda n=name, b=builder: b(Section(top.raw(n), filename, n)))
        else:
            diagnostics.append(f"{filename}: required section '{name}' is missing")

    optional = {
        "standing_wave": build_standing_wave,
        "protocol": lambda s: build_protocol(s, 0),
        "amplifier": build_amplifier,
        "dc": build_dc_params,
        "scans": build_scans,
        "fit": build_fit_options,
        "charging": build_charging,
    }
    for name, builder in optional.items():
        if top.has(name):
            attempt(lambda n=name, b=builder: b(Section(top.raw(n), filename, n)))

    attempt(top.finish)
    return diagnostics
