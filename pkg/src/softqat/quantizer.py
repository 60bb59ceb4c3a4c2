"""Fake quantization: y = s * round(clamp(x / s, a, b)) with configurable parts.

The integer range is symmetric, [-(2^(N-1) - 1), 2^(N-1) - 1].  The clamp is
either the hard min/max or its smooth gate-weighted replacement; the rounding
derivative is replaced in backward by a configurable estimator multiplier.
The step size s is either recomputed from the tensor every call (dynamic
min/max) or held as a learnable parameter initialized from the first tensor
it sees.

Backward, with u = x/s, c = clamp(u), m = estimator multiplier at c and
c' = clamp'(u):

    dy/dx = m * c'
    dy/ds = round(c) - m * c' * u        (per element; summed into scalar s)

The second term is written as -m * c' * u rather than s * m * c' * (-x/s^2)
so that the hard-clamp pass-through case reduces bit-exactly to the
learned-step-size form round(u) - u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clamps
from .clamps import Bounds, LogisticGate
from .estimators import PassThroughEstimator, round_forward
from .tensor import Tensor, _record

__all__ = [
    "QuantConfig",
    "LearnableScale",
    "minmax_scale",
    "fake_quant_forward",
    "fake_quant_backward",
    "export_int_grid",
    "clamp_curve",
    "quantize_learnable",
    "quantize_dynamic",
]

SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class QuantConfig:
    """Bit width plus the estimator/clamp/scale choices of one quantizer."""

    bits: int
    scale_mode: str = "dynamic"  # "dynamic" (min/max each call) | "learnable"
    estimator: object = field(default_factory=PassThroughEstimator)
    clamp_mode: str = "hard"  # "hard" | "soft"
    gate: object = field(default_factory=LogisticGate)
    round_mode: str = "nearest"  # "identity" bypasses rounding (gradcheck rig)

    def __post_init__(self):
        if self.bits < 2:
            raise ValueError(f"bits must be >= 2, got {self.bits}")
        if self.scale_mode not in ("dynamic", "learnable"):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")
        if self.clamp_mode not in ("hard", "soft"):
            raise ValueError(f"unknown clamp_mode {self.clamp_mode!r}")
        if self.round_mode not in ("nearest", "identity"):
            raise ValueError(f"unknown round_mode {self.round_mode!r}")

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def bounds(self) -> Bounds:
        return Bounds(-float(self.qmax), float(self.qmax))


def minmax_scale(x: np.ndarray, bits: int) -> float:
    """s = max|x| / (2^(N-1) - 1), floored at 1e-8 for all-zero input."""
    qmax = 2 ** (bits - 1) - 1
    s = float(np.max(np.abs(x)) / qmax)
    return s if s > 0.0 else SCALE_FLOOR


def _clamp_val(cfg: QuantConfig, u):
    if cfg.clamp_mode == "hard":
        return clamps.hard_clamp(u, cfg.bounds)
    return clamps.soft_clamp(u, cfg.bounds, cfg.gate)


def _clamp_dx(cfg: QuantConfig, u):
    if cfg.clamp_mode == "hard":
        return clamps.hard_clamp_dx(u, cfg.bounds)
    return clamps.soft_clamp_dx(u, cfg.bounds, cfg.gate)


def _check_scale(s):
    if np.any(np.asarray(s) <= 0.0):
        raise ValueError("fake quantization requires scale s > 0")


def _codes(cfg: QuantConfig, c):
    """Integer codes: round then clip into [a, b] (the smooth clamp can overshoot)."""
    return np.clip(round_forward(c), -cfg.qmax, cfg.qmax)


def fake_quant_forward(x, cfg: QuantConfig, s):
    """Elementwise s * round(clamp(x/s)); outputs lie exactly on s * {a..b}."""
    _check_scale(s)
    x = np.asarray(x, dtype=np.float64)
    c = _clamp_val(cfg, x / s)
    if cfg.round_mode == "identity":
        return s * c
    return s * _codes(cfg, c)


def fake_quant_backward(x, cfg: QuantConfig, s, upstream):
    """Gradients of the fake-quant output wrt x and s under the surrogates.

    Returns (grad_x, grad_s).  grad_s is reduced to the shape of s: a float
    for a scalar scale, a keepdims vector for per-row scales.
    """
    _check_scale(s)
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    u = x / s
    c = _clamp_val(cfg, u)
    cp = _clamp_dx(cfg, u)
    m = cfg.estimator.multiplier(c, lo=-cfg.qmax, hi=cfg.qmax)
    grad_x = upstream * (m * cp)
    value_term = c if cfg.round_mode == "identity" else _codes(cfg, c)
    gs_elem = upstream * (value_term - m * cp * u)
    if np.ndim(s) == 0:
        return grad_x, float(np.sum(gs_elem))
    axes = tuple(i for i in range(gs_elem.ndim) if np.shape(s)[i] == 1)
    return grad_x, gs_elem.sum(axis=axes, keepdims=True)


def export_int_grid(x, cfg: QuantConfig, s):
    """Integer codes in [a, b] plus s; codes * s reproduces the forward bit-exactly."""
    _check_scale(s)
    x = np.asarray(x, dtype=np.float64)
    codes = _codes(cfg, _clamp_val(cfg, x / s)).astype(np.int64)
    return codes, s


def clamp_curve(kind: str, x: float, s_grid, bounds: Bounds, gate=LogisticGate(1.0)):
    """Sample clamp(x/s) / soft_clamp(x/s) or their analytic d/ds over s_grid.

    kind is one of "hard", "soft", "hard_ds", "soft_ds".  These curves
    deliberately exclude the outer s multiplication of the quantizer.
    """
    s_grid = np.asarray(s_grid, dtype=np.float64)
    if np.any(s_grid <= 0):
        raise ValueError("clamp_curve: s grid must be positive")
    u = x / s_grid
    if kind == "hard":
        vals = clamps.hard_clamp(u, bounds)
    elif kind == "soft":
        vals = clamps.soft_clamp(u, bounds, gate)
    elif kind == "hard_ds":
        vals = clamps.hard_clamp_dx(u, bounds) * (-x / s_grid**2)
    elif kind == "soft_ds":
        vals = clamps.soft_clamp_dx(u, bounds, gate) * (-x / s_grid**2)
    else:
        raise ValueError(f"unknown curve kind {kind!r}")
    return list(zip(s_grid.tolist(), np.asarray(vals).tolist()))


# --- tape integration ------------------------------------------------------


def quantize_learnable(x: Tensor, s: Tensor, cfg: QuantConfig) -> Tensor:
    """Fake-quantize a tensor with a learnable scalar scale on the tape."""
    sval = s.item()
    y = fake_quant_forward(x.data, cfg, sval)
    xd = x.data

    def backward(g):
        gx, gs = fake_quant_backward(xd, cfg, sval, g)
        return gx, np.float64(gs)

    return _record([x, s], y, backward)


def quantize_dynamic(x: Tensor, cfg: QuantConfig, per_row: bool = False) -> Tensor:
    """Fake-quantize with a min/max scale recomputed from the data.

    per_row computes one scale per trailing row (used for per-step key/value
    quantization).  The scale is treated as a constant in backward.
    """
    xd = x.data
    if per_row:
        s = np.max(np.abs(xd), axis=-1, keepdims=True) / cfg.qmax
        s = np.where(s > 0.0, s, SCALE_FLOOR)
    else:
        s = minmax_scale(xd, cfg.bits)
    y = fake_quant_forward(xd, cfg, s)

    def backward(g):
        gx, _ = fake_quant_backward(xd, cfg, s, g)
        return (gx,)

    return _record([x], y, backward)


class LearnableScale:
    """Holds the learnable step size of one quantizer, initialized on first use."""

    def __init__(self, cfg: QuantConfig):
        self.cfg = cfg
        self.s: Tensor | None = None

    @property
    def initialized(self) -> bool:
        return self.s is not None

    def ensure(self, x_data: np.ndarray) -> Tensor:
        if self.s is None:
            self.s = Tensor(minmax_scale(x_data, self.cfg.bits), requires_grad=True)
        return self.s

    def __call__(self, x: Tensor) -> Tensor:
        return quantize_learnable(x, self.ensure(x.data), self.cfg)
