"""Shared scalar/array numerics: stable sigmoid, Gaussian CDF, rounding."""

from __future__ import annotations

import math

import numpy as np

INV_SQRT2 = 1.0 / math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_erf = np.frompyfunc(math.erf, 1, 1)


def sigmoid(u):
    """Logistic function, overflow-free for any finite input."""
    u = np.asarray(u, dtype=np.float64)
    e = np.exp(-np.abs(u))
    out = np.where(u >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def sigmoid_deriv(u):
    """d/du of the logistic function: sigma(u) * sigma(-u), computed stably."""
    u = np.asarray(u, dtype=np.float64)
    e = np.exp(-np.abs(u))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def gauss_cdf(u):
    """Standard normal CDF via erf."""
    u = np.asarray(u, dtype=np.float64)
    out = 0.5 * (1.0 + _erf(u * INV_SQRT2).astype(np.float64))
    return out if out.ndim else float(out)


def gauss_pdf(u):
    u = np.asarray(u, dtype=np.float64)
    out = INV_SQRT_2PI * np.exp(-0.5 * u * u)
    return out if out.ndim else float(out)


def round_half_away(x):
    """Round to nearest integer; exact halves go away from zero (so -2.5 -> -3)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.copysign(np.floor(np.abs(x) + 0.5), x)
    return out if out.ndim else float(out)
