"""Integer-order Bessel functions J_n via Miller's downward recurrence.

Phase modulation at depth beta spreads a carrier into sidebands weighted by
J_n(beta); the spectral weights J_n^2 obey sum_n J_n^2 = 1, which doubles as
the truncation check here.
"""
import math

import numpy as np

_RESCALE = 1e10
_SUM_RULE_TOL = 1e-8


def default_order_cap(beta):
    """Truncation order: |J_n(beta)| falls off superexponentially past n ~ beta,
    and beta + 20 keeps the discarded tail below ~1e-12."""
    return int(math.ceil(abs(beta))) + 20


def bessel_weights(beta, n_max=None):
    """J_n(beta) for n = -n_max .. n_max, as (orders, values).

    Downward recurrence J_{k-1} = (2k/x) J_k - J_{k+1} from a start order
    well above both n_max and beta, normalized with J_0 + 2*sum J_2k = 1.
    Negative orders follow from J_{-n} = (-1)^n J_n. Raises ValueError if the
    result breaks the sum rule sum_n J_n^2 = 1, which is what happens when
    n_max is chosen too small for the given beta.
    """
    beta = float(beta)
    if n_max is None:
        n_max = default_order_cap(beta)
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    orders = np.arange(-n_max, n_max + 1)

    x = abs(beta)
    if x == 0.0:
        vals = np.zeros(2 * n_max + 1)
        vals[n_max] = 1.0
        return orders, vals
    if x < 1e-6:
        # two-term power series; the truncated tail is O(x^4) relative
        pos = np.zeros(n_max + 1)
        half = 0.5 * x
        log_half = math.log(half)
        for n in range(n_max + 1):
            lead = math.exp(n * log_half - math.lgamma(n + 1.0))
            pos[n] = lead * (1.0 - half * half / (n + 1.0))
            if lead == 0.0:
                break
        return orders, _mirror(pos, n_max, beta)

    # start high enough that the downward iteration has locked on by n_max
    start = max(n_max, int(math.ceil(x))) + int(math.ceil(math.sqrt(40.0 * max(n_max, 1))))
    if start % 2:
        start += 1

    j_up = 0.0
    j = 1e-30
    pos = np.zeros(n_max + 1)
    norm = 0.0  # accumulates 2*(J_2 + J_4 + ...) across all even orders seen
    for k in range(start, 0, -1):
        j_down = (2.0 * k / x) * j - j_up
        j_up = j
        j = j_down  # unnormalized J_{k-1}
        if (k - 1) > 0 and (k - 1) % 2 == 0:
            norm += 2.0 * j
        if k - 1 <= n_max:
            pos[k - 1] = j
        while abs(j) > _RESCALE:
            j /= _RESCALE
            j_up /= _RESCALE
            pos /= _RESCALE
            norm /= _RESCALE
    norm += j  # j is now the unnormalized J_0
    pos = pos / norm

    vals = _mirror(pos, n_max, beta)
    total = float(np.sum(vals * vals))
    if abs(total - 1.0) > _SUM_RULE_TOL:
        raise ValueError(
            f"Bessel weights violate the sum rule (sum J_n^2 = {total:.12f}); "
            f"n_max = {n_max} is too small for beta = {beta:g}"
        )
    return orders, vals


def _mirror(pos, n_max, beta):
    """Extend J_0..J_n to negative orders with J_{-n} = (-1)^n J_n."""
    vals = np.empty(2 * n_max + 1)
    for n in range(0, n_max + 1):
        vn = pos[n]
        vals[n_max + n] = vn
        vals[n_max - n] = vn if n % 2 == 0 else -vn
    if beta < 0.0:
        orders = np.arange(-n_max, n_max + 1)
        vals = vals * np.where(orders % 2 == 0, 1.0, -1.0)
    return vals
