"""Rounding forward plus the surrogate gradient multipliers used in its place.

The rounding function has zero derivative almost everywhere, so training
substitutes a multiplier for d(round)/dx during backpropagation:

* pass-through: multiplier 1 everywhere (the classic straight-through rule);
* sigmoid: a sum of logistic-derivative bumps T * e^u / (1 + e^u)^2 with
  u = T * (x - i), one bump of height T/4 per integer center i.  Larger
  temperatures T concentrate the bumps, approximating rounding more closely.

The bump sum is evaluated over the integer centers within +/-1 of floor(x),
optionally intersected with a quantizer's integer range; terms farther away
are below 5 * exp(-2T) of the peak and the window extends the sum to
negative inputs, which symmetric quantization needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import round_half_away, sigmoid, sigmoid_deriv

__all__ = [
    "PassThroughEstimator",
    "SigmoidEstimator",
    "estimator_from_temperature",
    "round_forward",
    "sigmoid_ste_value",
]


def round_forward(x):
    """Nearest integer; exact halves round away from zero."""
    return round_half_away(x)


def sigmoid_ste_value(x, temperature: float):
    """Diagnostic value function: sum_{i=0}^{floor(x)} 1 / (1 + exp(T (x - i))).

    Defined for x >= 0 only; used for curve emission, never in training.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("sigmoid_ste_value: defined for x >= 0 only")
    if temperature <= 0:
        raise ValueError("sigmoid_ste_value: temperature must be positive")
    t = float(temperature)
    floors = np.floor(x)
    total = np.zeros_like(x)
    for i in range(int(floors.max()) + 1):
        total += np.where(i <= floors, sigmoid(-t * (x - i)), 0.0)
    return total if total.ndim else float(total)


def _bump_sum(x, t: float, lo, hi):
    """Sum of logistic-derivative bumps at integer centers floor(x) + {-1,0,1}.

    Centers outside [lo, hi] (when given) are dropped, matching the
    quantizer's representable integer range.
    """
    x = np.asarray(x, dtype=np.float64)
    base = np.floor(x)
    total = np.zeros_like(x)
    for off in (-1.0, 0.0, 1.0):
        center = base + off
        term = t * sigmoid_deriv(t * (x - center))
        if lo is not None:
            term = np.where((center >= lo) & (center <= hi), term, 0.0)
        total += term
    return total


@dataclass(frozen=True)
class PassThroughEstimator:
    """Vanilla straight-through rule: d(round)/dx taken as 1."""

    temperature: float = 0.0

    def multiplier(self, x, lo=None, hi=None):
        x = np.asarray(x, dtype=np.float64)
        out = np.ones_like(x)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SigmoidEstimator:
    """Sigmoid surrogate with sharpness T > 0; T = 0 is PassThroughEstimator."""

    temperature: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(
                f"SigmoidEstimator needs temperature > 0, got {self.temperature}"
            )

    def multiplier(self, x, lo=None, hi=None):
        out = _bump_sum(x, float(self.temperature), lo, hi)
        return out if out.ndim else float(out)


def estimator_from_temperature(temperature: float):
    """Map T = 0 to the pass-through rule and T > 0 to the sigmoid surrogate."""
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return PassThroughEstimator()
    return SigmoidEstimator(float(temperature))
