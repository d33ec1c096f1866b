"""Figure rendering for the report path of each CLI command.

Import of this module selects the Agg backend so figure files can be
produced on headless machines; nothing here opens a window.
"""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .constants import E_CHARGE

DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def render_null_map(eset, drive, species, null, pseudo_fn, path):
    """Pseudopotential map in the x = null_x plane with the null marked."""
    y = np.linspace(null[1] - 60e-6, null[1] + 60e-6, 121)
    z = np.linspace(max(null[2] - 40e-6, 2e-6), null[2] + 40e-6, 121)
    gy, gz = np.meshgrid(y, z)
    pts = np.stack([np.full_like(gy, null[0]), gy, gz], axis=-1)
    u = pseudo_fn(eset, drive, species, pts) / species.charge  # eV-per-charge scale
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    levels = np.linspace(0.0, np.percentile(u, 92), 30)
    cs = ax.contourf(gy * 1e6, gz * 1e6, u, levels=levels, cmap="viridis", extend="max")
    fig.colorbar(cs, ax=ax, label="pseudopotential (eV)")
    ax.plot(null[1] * 1e6, null[2] * 1e6, "r+", ms=12, mew=2, label="RF null")
    ax.set_xlabel("y (um)")
    ax.set_ylabel("z (um)")
    ax.legend(loc="upper right")
    return _save(fig, path)


def render_height_curve(volts, heights, slope, intercept, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(volts, np.asarray(heights) * 1e6, "o", ms=4, label="null height")
    ax.plot(volts, (slope * np.asarray(volts) + intercept) * 1e6, "-",
            label=f"fit: {slope * 1e9:.2f} nm/V")
    ax.set_xlabel("tweaker amplitude (V)")
    ax.set_ylabel("null height (um)")
    ax.legend()
    return _save(fig, path)


def render_fringe(volts, rates, stderr, fit, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(volts, rates, yerr=stderr, fmt="o", ms=3, lw=1, label="scan")
    if fit and np.isfinite(fit.get("period", np.nan)):
        vv = np.linspace(np.min(volts), np.max(volts), 400)
        model = fit["mean"] + fit["amplitude"] * np.cos(
            2.0 * np.pi * vv / fit["period"] + fit["phase"])
        ax.plot(vv, model, "-", label=f"period {fit['period']:.3f} V")
    ax.set_xlabel("tweaker amplitude (V)")
    ax.set_ylabel("detected rate (counts/s)")
    ax.legend()
    return _save(fig, path)


def render_lineshape(detunings, rates, stderr, path, model=None):
    mhz = np.asarray(detunings) / (2.0 * np.pi * 1e6)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(mhz, rates, yerr=stderr, fmt="o", ms=3, lw=1, label="scan")
    if model is not None:
        ax.plot(mhz, model, "-", label="model")
    ax.set_xlabel("detuning (MHz)")
    ax.set_ylabel("detected rate (counts/s)")
    ax.legend()
    return _save(fig, path)


def render_fit(detunings, rates, stderr, curve_detunings, curve, label, path):
    mhz = np.asarray(detunings) / (2.0 * np.pi * 1e6)
    cmhz = np.asarray(curve_detunings) / (2.0 * np.pi * 1e6)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(mhz, rates, yerr=stderr, fmt="o", ms=3, lw=1, label="data")
    ax.plot(cmhz, curve, "-", label=label)
    ax.set_xlabel("detuning (MHz)")
    ax.set_ylabel("detected rate (counts/s)")
    ax.legend()
    return _save(fig, path)


def render_charging(times, field_ez, displacements, unstable, path):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.5), sharex=True)
    ax1.plot(times, field_ez, "-")
    ax1.set_ylabel("E_z at ion (V/m)")
    ax2.plot(times, np.asarray(displacements) * 1e9, "-")
    ax2.set_ylabel("displacement (nm)")
    ax2.set_xlabel("exposure time (s)")
    if unstable:
        ax1.set_title("trajectory truncated: displacement left the harmonic range")
    return _save(fig, path)


def render_bifurcation(scan_x, scan_energy, minima_x, minima_energy, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ev = 1.0 / E_CHARGE
    ax.plot(np.asarray(scan_x) * 1e6, (scan_energy - np.min(scan_energy)) * ev, "-")
    if len(minima_x):
        ax.plot(np.asarray(minima_x) * 1e6,
                (np.asarray(minima_energy) - np.min(scan_energy)) * ev,
                "rv", ms=8, label="minima")
        ax.legend()
    ax.set_xlabel("axial position x (um)")
    ax.set_ylabel("potential energy (eV, offset)")
    return _save(fig, path)
