"""Pure-Python/NumPy versions of the compiled kernels in ``_kernels.pyx``.

Both implementations run the same algorithm in the same order so their
results agree to rounding.
"""
import math

import numpy as np

from .special import G_WEIGHTS, GK_NODES, GK_WEIGHTS

SMALL_T = 1e-8
MAX_DEPTH = 60


def chi2comb_integrand(t, lam, r):
    """sin(0.5 * sum r_k atan(lam_k t)) / (t * prod (1 + lam_k^2 t^2)^(r_k / 4))."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    r = np.asarray(r, dtype=float)
    tt = t[..., None]
    phase = 0.5 * (r * np.arctan(lam * tt)).sum(axis=-1)
    log_env = 0.25 * (r * np.log1p((lam * tt) ** 2)).sum(axis=-1)
    small = np.abs(t) < SMALL_T
    safe_t = np.where(small, 1.0, t)
    out = np.sin(phase) * np.exp(-log_env) / safe_t
    return np.where(small, 0.5 * float(r @ lam), out)


def _panel_edges(T):
    edges = [0.0]
    e = 1.0
    while e < T:
        edges.append(e)
        e *= 2.0
    edges.append(T)
    return edges


def chi2comb_integral(lam, r, T, abs_tol, max_subdivisions):
    """Integral of :func:`chi2comb_integrand` over [0, T].

    [0, T] is cut at 1, 2, 4, ... and each panel is bisected depth-first
    with Gauss-Kronrod 15 until its error share is met.  Returns
    ``(value, abs_error, n_intervals, converged)``.
    """
    lam = np.ascontiguousarray(lam, dtype=float)
    r = np.ascontiguousarray(r, dtype=float)
    edges = _panel_edges(float(T))
    n_panels = len(edges) - 1
    tol = abs_tol / n_panels
    total = 0.0
    err = 0.0
    n_int = 0
    converged = True
    for p in range(n_panels):
        pa, pb = edges[p], edges[p + 1]
        width = pb - pa
        stack = [(pa, pb, 0)]
        while stack:
            a, b, depth = stack.pop()
            c = 0.5 * (a + b)
            h = 0.5 * (b - a)
            vals = chi2comb_integrand(c + h * GK_NODES, lam, r)
            k = h * float(vals @ GK_WEIGHTS)
            g = h * float(vals @ G_WEIGHTS)
            e = abs(k - g)
            budget_left = n_int < max_subdivisions
            if e <= tol * (b - a) / width or depth >= MAX_DEPTH or not budget_left:
                if not math.isfinite(k):
                    return k, math.inf, n_int, False
                if e > tol * (b - a) / width:
                    converged = False
                total += k
                err += e
                n_int += 1
            else:
                # right half first so the left half is processed next
                stack.append((c, b, depth + 1))
                stack.append((a, c, depth + 1))
    return total, err, n_int, converged
