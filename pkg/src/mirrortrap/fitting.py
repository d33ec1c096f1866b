"""Parameter estimation for micromotion lineshapes and fringe scans.

The lineshape model factorizes as

    rate(Delta) = scale * spatial(a_z, offset) * spectral(a_z, Delta) + background

where ``spatial`` is the fringe-averaged intensity fraction at the ion site
and ``spectral`` the Bessel-weighted Lorentzian comb. Because the detuning
dependence carries no information about ``offset`` beyond the product
``scale * spatial``, floating both ``scale`` and ``offset`` makes the
problem rank deficient and is rejected up front.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ConvergenceError, DegenerateParameterError
from .fluorescence import scattering_rate_micromotion

PARAM_NAMES = ("a_z", "scale", "offset", "background")
DEFAULT_FREE = ("a_z", "scale", "background")
GRID_AMPLITUDES = np.geomspace(1e-10, 2e-7, 25)


@dataclass
class FitResult:
    params: dict
    stderr: dict
    covariance: np.ndarray
    free: tuple
    reduced_chisq: float
    success: bool
    message: str
    n_eval: int
    predict: object = field(repr=False, default=None)

    def __getitem__(self, name):
        return self.params[name]


def _model_factory(sw, species, omega_rf, z_base):
    def model(detunings, a_z, scale, offset, background):
        rr = scattering_rate_micromotion(
            sw, species, omega_rf, z_base + offset, abs(a_z), detuning=detunings)
        return scale * np.asarray(rr.rate, dtype=float) + background
    return model


def _linear_init(shape, data, sigma, scale_fixed, background_fixed):
    """Best (scale, background) for a fixed shape, by weighted linear lsq.

    Either coefficient can be pinned so the grid search scores each trial
    amplitude under the same constraints the refinement stage will use.
    """
    w = 1.0 / sigma
    columns = []
    rhs = data.astype(float)
    if scale_fixed is None:
        columns.append(shape)
    else:
        rhs = rhs - scale_fixed * shape
    if background_fixed is None:
        columns.append(np.ones_like(shape))
    else:
        rhs = rhs - background_fixed
    if not columns:
        resid = rhs * w
        return scale_fixed, background_fixed, float(resid @ resid)
    a = np.stack([c * w for c in columns], axis=1)
    coef, *_ = np.linalg.lstsq(a, rhs * w, rcond=None)
    scale = float(coef[0]) if scale_fixed is None else scale_fixed
    background = float(coef[-1]) if background_fixed is None else background_fixed
    resid = (scale * shape + background - data) * w
    return scale, background, float(resid @ resid)


def _covariance(residual_fn, x):
    """Covariance (J^T J)^-1 from a central-difference Jacobian at x.

    Columns are normalized before inversion: the free parameters differ by
    many orders of magnitude (meters vs counts/s), and inverting the raw
    normal matrix loses the small-parameter variances entirely.
    """
    n = len(x)
    columns = []
    for i in range(n):
        h = max(abs(x[i]) * 1e-6, 1e-14)
        xp = np.array(x, dtype=float)
        xm = np.array(x, dtype=float)
        xp[i] += h
        xm[i] -= h
        columns.append((residual_fn(xp) - residual_fn(xm)) / (2.0 * h))
    jac = np.stack(columns, axis=1)
    norms = np.linalg.norm(jac, axis=0)
    cov = np.full((n, n), np.nan)
    if np.any(norms == 0.0):
        return cov
    scaled = jac / norms
    normal = scaled.T @ scaled
    if np.linalg.cond(normal) > 1e12:
        return cov
    return np.linalg.inv(normal) / np.outer(norms, norms)


def fit_micromotion(detunings, rates, stderr, sw, species, omega_rf, z_base,
                    init=None, free=DEFAULT_FREE, max_nfev=2000):
    """Fit the micromotion lineshape model to measured rates.

    Parameters are ``a_z`` (m), ``scale`` (dimensionless gain on the
    detected rate), ``offset`` (m, ion displacement from the node used as
    ``z_base``) and ``background`` (counts/s). ``free`` selects which ones
    float; the rest stay at their ``init`` (or default) values. Initial
    values need not be supplied: a coarse amplitude grid with closed-form
    gain/background seeds the local refinement.
    """
    detunings = np.asarray(detunings, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if stderr is None:
        sigma = np.ones_like(rates)
    else:
        sigma = np.asarray(stderr, dtype=float)
        sigma = np.where(sigma > 0, sigma, np.max(sigma) if np.max(sigma) > 0 else 1.0)
    free = tuple(free)
    for name in free:
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown fit parameter {name!r}")
    if "scale" in free and "offset" in free:
        raise DegenerateParameterError(
            "scale and offset only enter the lineshape through their combined "
            "amplitude; fix one of them", parameter="offset")
    if detunings.size <= len(free):
        raise ValueError("fewer data points than free parameters")

    model = _model_factory(sw, species, omega_rf, z_base)
    params = {"a_z": 10e-9, "scale": sw.collection_efficiency, "offset": 0.0,
              "background": float(np.min(rates))}
    if init:
        params.update(init)

    if "a_z" in free and (init is None or "a_z" not in init):
        scale_fixed = None if "scale" in free else params["scale"]
        background_fixed = None if "background" in free else params["background"]
        best = (math.inf, params["a_z"], params["scale"], params["background"])
        for a_trial in GRID_AMPLITUDES:
            shape = model(detunings, a_trial, 1.0, params["offset"], 0.0)
            if np.max(shape) <= 0.0:
                continue
            s0, b0, cost = _linear_init(shape, rates, sigma, scale_fixed, background_fixed)
            if cost < best[0]:
                best = (cost, a_trial, s0, b0)
        params["a_z"] = best[1]
        if "scale" in free:
            params["scale"] = best[2]
        if "background" in free:
            params["background"] = max(best[3], 0.0)

    def residuals(x):
        p = dict(params)
        p.update(zip(free, x))
        return (model(detunings, p["a_z"], p["scale"], p["offset"], p["background"])
                - rates) / sigma

    x0 = np.array([params[name] for name in free], dtype=float)
    sol = least_squares(residuals, x0, method="lm", max_nfev=max_nfev)
    if not sol.success:
        raise ConvergenceError(f"lineshape fit did not converge: {sol.message}")

    fitted = dict(params)
    fitted.update(zip(free, sol.x))
    fitted["a_z"] = abs(fitted["a_z"])

    dof = max(detunings.size - len(free), 1)
    chisq = 2.0 * sol.cost
    cov = _covariance(residuals, sol.x)
    stderr_map = {}
    for i, name in enumerate(free):
        var = cov[i, i]
        stderr_map[name] = math.sqrt(var) if np.isfinite(var) and var >= 0 else math.nan

    def predict(dets):
        return model(np.asarray(dets, dtype=float), fitted["a_z"], fitted["scale"],
                     fitted["offset"], fitted["background"])

    return FitResult(
        params=fitted,
        stderr=stderr_map,
        covariance=cov,
        free=free,
        reduced_chisq=chisq / dof,
        success=True,
        message=sol.message,
        n_eval=int(sol.nfev),
        predict=predict,
    )


def fit_sinusoid(x, y, sigma=None):
    """Fit y = mean + amplitude * cos(2 pi x / period + phase).

    Seeds the frequency from the discrete spectrum of the detrended data
    (the abscissa is assumed close to uniform) and refines all four
    parameters. Returns a plain dict so scan metadata stays serializable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise ValueError("sinusoid fit needs at least four points")
    if sigma is None:
        sigma = np.ones_like(y)
    else:
        sigma = np.asarray(sigma, dtype=float)
        sigma = np.where(sigma > 0, sigma, 1.0)
    span = x[-1] - x[0]
    if span == 0.0:
        raise ValueError("sinusoid fit needs a spanning abscissa")
    mean0 = float(np.mean(y))
    spec = np.fft.rfft(y - mean0)
    k = int(np.argmax(np.abs(spec[1:]))) + 1
    f0 = k * (x.size - 1) / (x.size * span)
    amp0 = 2.0 * np.abs(spec[k]) / x.size
    phase0 = float(np.angle(spec[k]))

    def residuals(p):
        f, amp, mean, phase = p
        return (mean + amp * np.cos(2.0 * math.pi * f * x + phase) - y) / sigma

    sol = least_squares(residuals, [f0, amp0, mean0, phase0], method="lm")
    f, amp, mean, phase = sol.x
    if amp < 0.0:
        amp, phase = -amp, phase + math.pi
    phase = math.remainder(phase, 2.0 * math.pi)
    resid = residuals(sol.x)
    return {
        "period": 1.0 / abs(f) if f != 0.0 else math.inf,
        "amplitude": float(amp),
        "mean": float(mean),
        "phase": float(phase),
        "rms_residual": float(np.sqrt(np.mean(resid**2))),
        "success": bool(sol.success),
    }
