"""Averages against the arcsine (turning-point) density of a harmonic drive.

A coordinate oscillating as z' = a*sin(Omega*t) spends its time distributed
as r(z') = 1/(pi*sqrt(a^2 - z'^2)) on (-a, a). Gauss-Chebyshev quadrature
absorbs exactly that endpoint-singular weight:

    (1/pi) * int_{-a}^{a} g(z')/sqrt(a^2 - z'^2) dz'
        = (1/n) * sum_k g(a*cos(theta_k)),  theta_k = (2k - 1)*pi/(2n).

Node counts double from ``n_start`` until two successive estimates agree to
``rel_tol``; hitting the cap raises with the last residual attached.
"""
import numpy as np

from .errors import QuadratureError

N_START = 64
N_CAP = 8192
REL_TOL = 1e-9


def chebyshev_nodes(n):
    """First-kind Gauss-Chebyshev abscissae on (-1, 1), no endpoints."""
    k = np.arange(1, n + 1)
    return np.cos((2.0 * k - 1.0) * np.pi / (2.0 * n))


def arcsine_average(g, halfwidth, rel_tol=REL_TOL, n_start=N_START, n_cap=N_CAP):
    """Mean of g under the arcsine density on (-halfwidth, halfwidth).

    ``g`` must accept an array of sample positions and return either an array
    of the same length or a stack of shape (len(samples), ...); the average
    runs over the first axis. halfwidth = 0 collapses to g(0).
    """
    a = float(halfwidth)
    if a < 0.0:
        raise ValueError("halfwidth must be non-negative")
    if a == 0.0:
        return np.mean(g(np.zeros(1)), axis=0)
    if n_cap <= n_start:
        raise ValueError("n_cap must exceed n_start")

    n = int(n_start)
    prev = np.mean(g(a * chebyshev_nodes(n)), axis=0)
    while n < n_cap:
        n *= 2
        cur = np.mean(g(a * chebyshev_nodes(n)), axis=0)
        resid = float(np.max(np.abs(cur - prev)))
        scale = float(np.max(np.abs(cur)))
        if resid <= rel_tol * max(scale, 1e-300):
            return cur
        prev = cur
    raise QuadratureError(
        f"arcsine average did not settle below {rel_tol:g} within {n_cap} nodes "
        f"(last residual {resid:.3e})",
        residual=resid,
    )
