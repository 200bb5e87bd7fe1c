"""Quadrature helpers for hybrid measures (atoms plus density segments).

All density integrands here may carry an integrable power singularity at the
lower endpoint of their segment; the substitution theta = lower + s**2
flattens (theta - lower)**(-g) for g < 1 and is harmless for smooth
integrands.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

PROBE_DEPTH = 12
# a nonintegrable power tail pins successive sliver ratios at or above 1;
# integrable exponents near 1 can sit in the high 0.9s, so keep margin thin
DIVERGENCE_RATIO = 0.99
HUGE = 1e12


def integrate_density(f, lower, upper, tol=1e-10):
    """Integrate scalar f(theta) over (lower, upper); upper=None means +inf."""
    hi = np.inf if upper is None else float(upper)
    lo = float(lower)
    if hi <= lo:
        return 0.0
    s_hi = np.inf if hi == np.inf else np.sqrt(hi - lo)

    def g(s):
        return 2.0 * s * f(lo + s * s)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if s_hi == np.inf:
            # split at s = 1: the finite piece isolates the endpoint
            # singularity (QAGS handles it), the tail piece is smooth
            v1, _ = integrate.quad(g, 0.0, 1.0, epsabs=tol, epsrel=tol,
                                   limit=400)
            v2, _ = integrate.quad(g, 1.0, np.inf, epsabs=tol, epsrel=tol,
                                   limit=400)
            val = v1 + v2
        else:
            val, _ = integrate.quad(g, 0.0, s_hi, epsabs=tol, epsrel=tol,
                                    limit=400)
    return val


def diverges_at_lower(f, lower, upper, depth=PROBE_DEPTH):
    """Heuristic divergence flag for a suspected lower-endpoint singularity.

    Shrink a cutoff geometrically toward the endpoint; the successive sliver
    contributions of a convergent power singularity decay geometrically,
    while a non-integrable one yields ratios pinned at or above 1.  The
    threshold below is a documented heuristic, not a certificate.
    """
    hi = np.inf if upper is None else float(upper)
    lo = float(lower)
    span = min(1.0, (hi - lo) / 2.0) if hi != np.inf else 1.0
    if span <= 0.0:
        return False

    # probe in s with theta = lo + s**2, matching integrate_density; this
    # keeps quad samples away from the cancellation zone of (theta - lo)
    def g(s):
        return 2.0 * s * f(lo + s * s)

    s_hi = np.sqrt(span)
    s_cuts = s_hi * 2.0 ** (-np.arange(1.0, depth + 1.0))
    vals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for c in s_cuts:
            v, _ = integrate.quad(g, c, s_hi, epsabs=1e-300, epsrel=1e-9,
                                  limit=400)
            vals.append(v)
    vals = np.asarray(vals)
    if not np.all(np.isfinite(vals)):
        return True
    if abs(vals[-1]) >= HUGE:
        return True
    inc = np.diff(vals)
    total = abs(vals[-1]) + 1e-300
    if inc[-1] <= 1e-8 * total:
        return False
    tail = inc[-4:]
    if np.any(tail[:-1] <= 0.0):
        return False
    ratios = tail[1:] / tail[:-1]
    return bool(np.mean(ratios) > DIVERGENCE_RATIO)


def opnorm(mat):
    """Operator (spectral) norm of a matrix."""
    a = np.atleast_2d(np.asarray(mat, dtype=float))
    return float(np.linalg.norm(a, 2))
