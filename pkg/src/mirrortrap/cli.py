"""Batch command-line driver.

Usage: ``mirrortrap <command> --config <path> [--out <dir>] [--seed <int>]
[--plot]``. Commands load one YAML configuration, run a scan or simulation,
write CSV data plus a JSON sidecar atomically into the output directory,
and print a one-line summary. ``--plot`` additionally renders a PNG figure
next to the data. Exit codes: 0 success, 1 configuration error, 2 solver
failure, 3 output I/O failure.
"""
import argparse
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .config import load_config, validate_config
from .constants import E_CHARGE
from .errors import ConfigError, NotConfiningError, SolverError
from .trap import (
    DCField,
    find_rf_null,
    pseudopotential,
    rf_field_phasor,
    trap_frequencies,
    tweaker_height_curve,
)
from .fluorescence import fringe_scan, lineshape_scan
from .fitting import fit_micromotion
from .charging import ChargePatchState, axial_potential_minima, exposure_simulation
from .outputs import read_csv, write_csv, write_json

DEFAULT_GUESS = (0.0, 0.0, 50e-6)
MHZ = 2.0 * math.pi * 1e6


def _parser():
    parser = argparse.ArgumentParser(
        prog="mirrortrap",
        description="Surface-trap simulator: null steering, standing-wave "
                    "fluorescence, micromotion fitting, dielectric charging.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--out", default=None, help="output directory override")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--plot", action="store_true",
                        help="also render a PNG figure next to the data")

    handlers = {
        "null-find": (_cmd_null_find, "locate the RF null and report confinement"),
        "height-curve": (_cmd_height_curve, "null height versus tweaker voltage"),
        "fringe-scan": (_cmd_fringe_scan, "scattering rate versus tweaker voltage"),
        "lineshape-scan": (_cmd_lineshape_scan, "scattering rate versus detuning"),
        "fit": (_cmd_fit, "fit the micromotion lineshape model to a scan file"),
        "charging-sim": (_cmd_charging_sim, "charge build-up and ion drift"),
        "bifurcation": (_cmd_bifurcation, "axial well shape under patch charge"),
    }
    for name, (handler, help_text) in handlers.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        if name == "fit":
            p.add_argument("--input", default=None,
                           help="scan CSV to fit (default: <out>/lineshape_scan.csv)")

    p = sub.add_parser("validate", help="report configuration problems without running")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("init", help="write the shipped default config and geometry")
    p.add_argument("--out", default=".", help="directory for the new files")
    p.add_argument("--force", action="store_true", help="overwrite existing files")
    p.set_defaults(handler=_cmd_init)
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def _load(args):
    cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg


def _outpath(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _dc_field(cfg, null):
    if cfg.dc_params is None:
        return None
    center = cfg.dc_params["center"]
    if center is None:
        center = tuple(float(c) for c in null)
    return DCField(omega_axial=cfg.dc_params["omega_axial"], center=center,
                   voltages=cfg.dc_params["voltages"])


def _field_residual(cfg, null):
    e = rf_field_phasor(cfg.geometry, cfg.drive, null)
    return float(np.linalg.norm(np.abs(e)))


def _cmd_null_find(args):
    cfg = _load(args)
    null = find_rf_null(cfg.geometry, cfg.drive, DEFAULT_GUESS)
    residual = _field_residual(cfg, null)
    dc = _dc_field(cfg, null)
    freqs = None
    freq_note = ""
    try:
        freqs = trap_frequencies(cfg.geometry, cfg.drive, cfg.species, null, dc=dc)
    except NotConfiningError as exc:
        freq_note = f" (confinement incomplete: {exc})"
    meta = {"residual_v_per_m": residual}
    if freqs is not None:
        meta["secular_hz"] = (freqs.omegas / (2.0 * math.pi)).tolist()
        meta["principal_axes"] = freqs.axes.tolist()
        meta["mathieu_q"] = freqs.mathieu_q
    write_csv(_outpath(cfg, "null_find.csv"),
              [("x_m", [null[0]]), ("y_m", [null[1]]), ("z_m", [null[2]]),
               ("field_residual_v_per_m", [residual])],
              cfg.resolved, meta)
    if args.plot:
        from .plotting import render_null_map
        render_null_map(cfg.geometry, cfg.drive, cfg.species, null,
                        pseudopotential, _outpath(cfg, "null_find.png"))
    if freqs is not None:
        f_mhz = freqs.omegas / MHZ
        freq_note = (f"; secular ({f_mhz[0]:.4f}, {f_mhz[1]:.4f}, {f_mhz[2]:.4f}) MHz, "
                     f"q = {freqs.mathieu_q:.3f}")
    print(f"RF null at ({null[0] * 1e6:.3f}, {null[1] * 1e6:.3f}, "
          f"{null[2] * 1e6:.3f}) um, |E| residual {residual:.2e} V/m{freq_note}")
    return 0


def _cmd_height_curve(args):
    cfg = _load(args)
    grid = cfg.require_scan("height_curve", "height-curve")
    curve = tweaker_height_curve(cfg.geometry, cfg.drive, grid["values"], DEFAULT_GUESS)
    meta = {
        "slope_m_per_v": curve.slope,
        "intercept_m": curve.intercept,
        "max_residual_fraction": curve.max_residual_fraction,
    }
    write_csv(_outpath(cfg, "height_curve.csv"),
              [("tweaker_v", curve.voltages),
               ("height_m", curve.heights),
               ("null_x_m", curve.nulls[:, 0]),
               ("null_y_m", curve.nulls[:, 1]),
               ("residual_m", curve.residuals)],
              cfg.resolved, meta)
    if args.plot:
        from .plotting import render_height_curve
        render_height_curve(curve.voltages, curve.heights, curve.slope,
                            curve.intercept, _outpath(cfg, "height_curve.png"))
    print(f"height slope {curve.slope * 1e9:.3f} nm/V, intercept "
          f"{curve.intercept * 1e6:.4f} um, max residual "
          f"{curve.max_residual_fraction * 100:.3f}% of range "
          f"({curve.voltages.size} points)")
    return 0


def _cmd_fringe_scan(args):
    cfg = _load(args)
    sw = cfg.require("standing_wave", "standing_wave", "fringe-scan")
    protocol = cfg.require("protocol", "protocol", "fringe-scan")
    grid = cfg.require_scan("fringe", "fringe-scan")
    base_null = find_rf_null(cfg.geometry, cfg.drive, DEFAULT_GUESS)
    dc = _dc_field(cfg, base_null)
    scan = fringe_scan(cfg.geometry, cfg.drive, cfg.species, sw, protocol,
                       grid["values"], dc=dc, null_guess=base_null)
    heights = np.asarray(scan.meta["equilibrium_heights_m"])
    height_slope = float(np.polyfit(scan.abscissa, heights, 1)[0])
    period_v = scan.meta["period_volts"]
    spatial_period = period_v * height_slope
    scan.meta["equilibrium_height_slope_m_per_v"] = height_slope
    scan.meta["spatial_period_m"] = spatial_period
    write_csv(_outpath(cfg, "fringe_scan.csv"),
              [("tweaker_v", scan.abscissa),
               ("rate_cps", scan.rates),
               ("stderr_cps", scan.stderr),
               ("low_intensity_flag", scan.flags),
               ("height_m", heights),
               ("micromotion_m", np.asarray(scan.meta["micromotion_amplitudes_m"]))],
              cfg.resolved, scan.meta)
    if args.plot:
        from .plotting import render_fringe
        render_fringe(scan.abscissa, scan.rates, scan.stderr,
                      scan.meta["sinusoid_fit"], _outpath(cfg, "fringe_scan.png"))
    print(f"fringe period {period_v:.4f} V = {spatial_period * 1e9:.2f} nm at "
          f"{height_slope * 1e9:.3f} nm/V equilibrium slope "
          f"({scan.abscissa.size} points)")
    return 0


def _cmd_lineshape_scan(args):
    cfg = _load(args)
    sw = cfg.require("standing_wave", "standing_wave", "lineshape-scan")
    protocol = cfg.require("protocol", "protocol", "lineshape-scan")
    grid = cfg.require_scan("lineshape", "lineshape-scan")
    base_null = find_rf_null(cfg.geometry, cfg.drive, DEFAULT_GUESS)
    dc = _dc_field(cfg, base_null)
    scan = lineshape_scan(cfg.geometry, cfg.drive, cfg.species, sw, protocol,
                          grid["values"], grid["micromotion"], dc=dc,
                          null_guess=base_null)
    write_csv(_outpath(cfg, "lineshape_scan.csv"),
              [("detuning_hz", scan.abscissa / (2.0 * math.pi)),
               ("rate_cps", scan.rates),
               ("stderr_cps", scan.stderr),
               ("low_intensity_flag", scan.flags)],
              cfg.resolved, scan.meta)
    if args.plot:
        from .plotting import render_lineshape
        render_lineshape(scan.abscissa, scan.rates, scan.stderr,
                         _outpath(cfg, "lineshape_scan.png"))
    peak = int(np.argmax(scan.rates))
    print(f"lineshape over [{scan.abscissa[0] / MHZ:.1f}, "
          f"{scan.abscissa[-1] / MHZ:.1f}] MHz at a_z = "
          f"{grid['micromotion'] * 1e9:.1f} nm (beta {scan.meta['beta']:.3f}); "
          f"peak {scan.rates[peak]:.1f} counts/s at {scan.abscissa[peak] / MHZ:.1f} MHz")
    return 0


def _cmd_fit(args):
    cfg = _load(args)
    sw = cfg.require("standing_wave", "standing_wave", "fit")
    options = cfg.fit_options or {"input": None, "free": ("a_z", "background")}
    input_path = args.input or options["input"] or _outpath(cfg, "lineshape_scan.csv")
    if not os.path.isabs(input_path) and not os.path.exists(input_path):
        candidate = _outpath(cfg, input_path)
        if os.path.exists(candidate):
            input_path = candidate
    data, _, meta = read_csv(input_path)
    for column in ("detuning_hz", "rate_cps"):
        if column not in data:
            raise ConfigError(f"{input_path}: missing column '{column}'")
    detunings = 2.0 * math.pi * data["detuning_hz"]
    stderr = data.get("stderr_cps")
    z_base = float(meta.get("node_position_m", 0.0))
    result = fit_micromotion(detunings, data["rate_cps"], stderr, sw, cfg.species,
                             cfg.drive.omega, z_base, free=options["free"])
    a_err = result.stderr.get("a_z", float("nan"))
    payload = {
        "a_z_m": result.params["a_z"],
        "scale": result.params["scale"],
        "offset_m": result.params["offset"],
        "background_cps": result.params["background"],
        "stderr": result.stderr,
        "free": list(result.free),
        "reduced_chisq": result.reduced_chisq,
        "n_eval": result.n_eval,
        "input": os.path.basename(input_path),
        "z_base_m": z_base,
    }
    write_json(_outpath(cfg, "fit_result.json"), {"config": cfg.resolved, "fit": payload})
    model = result.predict(detunings)
    write_csv(_outpath(cfg, "fit_curve.csv"),
              [("detuning_hz", data["detuning_hz"]),
               ("rate_cps", data["rate_cps"]),
               ("model_cps", model),
               ("residual_cps", data["rate_cps"] - model)],
              cfg.resolved, payload)
    if args.plot:
        from .plotting import render_fit
        dense = np.linspace(detunings.min(), detunings.max(), 400)
        label = f"a_z = {result.params['a_z'] * 1e9:.2f} nm"
        render_fit(detunings, data["rate_cps"], stderr, dense,
                   result.predict(dense), label, _outpath(cfg, "fit_curve.png"))
    print(f"fitted a_z = {result.params['a_z'] * 1e9:.3f} +/- {a_err * 1e9:.3f} nm, "
          f"background {result.params['background']:.2f} counts/s, "
          f"chi2/dof = {result.reduced_chisq:.3f} ({result.n_eval} evaluations)")
    return 0


def _vertical_secular(cfg, null):
    dc = _dc_field(cfg, null)
    freqs = trap_frequencies(cfg.geometry, cfg.drive, cfg.species, null, dc=dc)
    vertical = int(np.argmax(np.abs(freqs.axes[2, :])))
    return float(freqs.omegas[vertical])


def _cmd_charging_sim(args):
    cfg = _load(args)
    charging = cfg.require("charging", "charging", "charging-sim")
    null = find_rf_null(cfg.geometry, cfg.drive, DEFAULT_GUESS)
    omega_z = _vertical_secular(cfg, null)
    record = exposure_simulation(charging["model"], cfg.species, omega_z,
                                 charging["duration"], charging["dt"],
                                 ion_position=null)
    meta = dict(record.meta)
    meta["unstable"] = record.unstable
    meta["unit_field_ez_v_per_m_per_c"] = record.unit_field_ez
    write_csv(_outpath(cfg, "charging_sim.csv"),
              [("t_s", record.times),
               ("charge_c", record.charges),
               ("charge_e", record.charges / E_CHARGE),
               ("field_ez_v_per_m", record.field_ez),
               ("displacement_m", record.displacements),
               ("field_rate_v_per_m_s", record.field_rate),
               ("displacement_rate_m_per_s", record.displacement_rate)],
              cfg.resolved, meta)
    if args.plot:
        from .plotting import render_charging
        render_charging(record.times, record.field_ez, record.displacements,
                        record.unstable, _outpath(cfg, "charging_sim.png"))
    drift = record.field_rate[-1] if record.field_rate.size else 0.0
    tail = ""
    if record.unstable:
        tail = (f"; UNSTABLE: displacement left the 5 um harmonic range at "
                f"t = {record.times[-1]:.1f} s (record truncated)")
    print(f"after {record.times[-1]:.1f} s: charge {record.charges[-1] / E_CHARGE:.1f} e, "
          f"E_z {record.field_ez[-1]:.3f} V/m, displacement "
          f"{record.displacements[-1] * 1e9:.2f} nm, drift {drift:.4f} V/m/s{tail}")
    return 0


def _cmd_bifurcation(args):
    cfg = _load(args)
    charging = cfg.require("charging", "charging", "bifurcation")
    if cfg.dc_params is None or cfg.dc_params["omega_axial"] <= 0.0:
        raise ConfigError(
            "bifurcation needs a positive dc.axial_frequency_mhz (the axial "
            "well being deformed)", filename=cfg.source)
    charge = charging["charge"]
    if charge is None:
        charge = charging["model"].charging_rate * charging["duration"]
    null = find_rf_null(cfg.geometry, cfg.drive, DEFAULT_GUESS)
    state = ChargePatchState.from_config(charging["model"], charge)
    result = axial_potential_minima(cfg.species, cfg.dc_params["omega_axial"],
                                    state, height=null[2], y0=null[1],
                                    halfwidth=charging["halfwidth"],
                                    n_grid=charging["grid_points"])
    meta = {
        "charge_c": charge,
        "charge_e": charge / E_CHARGE,
        "bifurcated": result.bifurcated,
        "minima_x_m": result.minima_x.tolist(),
        "minima_energy_j": result.minima_energy.tolist(),
        "threshold_charge_c": result.threshold_charge,
        "threshold_charge_e": result.threshold_charge / E_CHARGE,
        "height_m": float(null[2]),
    }
    write_csv(_outpath(cfg, "bifurcation.csv"),
              [("x_m", result.scan_x), ("energy_j", result.scan_energy)],
              cfg.resolved, meta)
    if args.plot:
        from .plotting import render_bifurcation
        render_bifurcation(result.scan_x, result.scan_energy, result.minima_x,
                           result.minima_energy, _outpath(cfg, "bifurcation.png"))
    wells = ", ".join(f"{x * 1e6:+.2f}" for x in result.minima_x)
    shape = "double well" if result.bifurcated else "single well"
    print(f"charge {charge / E_CHARGE:.1f} e: {shape}, minima at [{wells}] um; "
          f"threshold {result.threshold_charge / E_CHARGE:.1f} e")
    return 0


def _cmd_validate(args):
    diagnostics = validate_config(args.config)
    if not diagnostics:
        print("configuration OK")
        return 0
    for line in diagnostics:
        print(line)
    return 1


def _cmd_init(args):
    os.makedirs(args.out, exist_ok=True)
    written = []
    for name in ("default.yaml", "five_wire.yaml"):
        target = os.path.join(args.out, name)
        if os.path.exists(target) and not args.force:
            print(f"refusing to overwrite {target} (use --force)", file=sys.stderr)
            return 1
        text = resources.files("mirrortrap").joinpath("data", name).read_text()
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(target)
    print("wrote " + " and ".join(written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
