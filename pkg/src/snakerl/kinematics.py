"""Backbone shape reconstruction and chamber pressure scheduling.

The robot body is an inextensible planar curve of length ``L`` sampled at
``n_points`` uniform arc-length stations. Shape is stored as curvature
``kappa(s)``; bulk pose as the body-averaged position (COM) and the
body-averaged tangent angle (heading). Decoupling shape from pose uses the
mean-zero anti-derivative: a cumulative integral along the body with its
body average subtracted, so integrating curvature gives angles whose mean
is exactly the heading, and integrating tangents gives positions whose mean
is exactly the COM.

Actuation follows the four-channel pneumatic layout: each channel carries a
sinusoid with a quarter-period phase offset plus a per-step bias that ramps
linearly from its previous value over one actuation period. Channel
pressures are mapped to a local bending pressure difference through fixed
quarter-phase spatial weights, which makes the four phased channels produce
a single traveling curvature wave along the body.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ConfigError

N_CHANNELS = 4


@dataclass(frozen=True)
class BodyGrid:
    """Uniform arc-length discretization of the backbone curve.

    ``ds * (n_points - 1) == length`` by construction.
    """

    n_points: int = 129
    length: float = 0.5

    def __post_init__(self):
        if self.n_points < 3:
            raise ConfigError(f"n_points must be >= 3, got {self.n_points}")
        if not self.length > 0:
            raise ConfigError(f"length must be positive, got {self.length}")

    @property
    def ds(self) -> float:
        return self.length / (self.n_points - 1)

    @property
    def s(self) -> np.ndarray:
        """Arc-length sample positions, tail (s=0) to head (s=L)."""
        return np.linspace(0.0, self.length, self.n_points)


@dataclass(frozen=True)
class ActuationConfig:
    """Pneumatic actuation parameters.

    pressure_magnitude: amplitude of the per-channel sinusoid (normalized
        pressure units).
    period: actuation period in seconds; one control step spans one period.
    curvature_gain: bending elasticity, curvature produced per unit local
        pressure difference (1/(m * pressure unit)).
    """

    pressure_magnitude: float = 0.15
    period: float = 1.0
    curvature_gain: float = 20.0
    n_channels: int = N_CHANNELS

    def __post_init__(self):
        # Zero magnitude is allowed so unactuated rest cases can be run.
        if not self.pressure_magnitude >= 0:
            raise ConfigError("pressure_magnitude must be >= 0")
        if not self.period > 0:
            raise ConfigError("period must be > 0")
        if not self.curvature_gain > 0:
            raise ConfigError("curvature_gain must be > 0")
        if self.n_channels != N_CHANNELS:
            raise ConfigError(f"n_channels is fixed at {N_CHANNELS}")


@dataclass
class ChannelState:
    """Per-channel bias state and wave propagation direction.

    ``bias`` holds the commanded biases for the current period, ``bias_prev``
    the previous period's values; the schedule ramps linearly between them.
    ``direction`` is +1 or -1 and flips the traveling-wave direction.
    """

    bias: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS))
    bias_prev: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS))
    direction: int = 1

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float)
        self.bias_prev = np.asarray(self.bias_prev, dtype=float)
        if self.bias.shape != (N_CHANNELS,) or self.bias_prev.shape != (N_CHANNELS,):
            raise DimensionError("bias and bias_prev must have 4 entries")
        if np.any(self.bias < 0) or np.any(self.bias > 1):
            raise DomainError("bias entries must lie in [0, 1]")
        if np.any(self.bias_prev < 0) or np.any(self.bias_prev > 1):
            raise DomainError("bias_prev entries must lie in [0, 1]")
        if self.direction not in (-1, 1):
            raise DomainError(f"direction must be -1 or +1, got {self.direction}")


@dataclass(frozen=True)
class ShapeField:
    """Sampled backbone: positions (n,2) in meters, tangent angles (n,) in
    radians, curvature (n,) in 1/m."""

    positions: np.ndarray
    angles: np.ndarray
    curvature: np.ndarray


def cumulative_trapezoid(f: np.ndarray, ds: float) -> np.ndarray:
    """Cumulative trapezoid integral from the first sample, along the last
    axis. The leading value is 0."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[..., 0] = 0.0
    np.cumsum(0.5 * (f[..., 1:] + f[..., :-1]), axis=-1, out=out[..., 1:])
    out[..., 1:] *= ds
    return out


def mean_zero_antiderivative(f: np.ndarray, grid: BodyGrid) -> np.ndarray:
    """Cumulative integral of ``f`` along the body minus its body average.

    The discrete mean of the result is exactly zero, which is what lets
    bulk pose be carried separately from shape. Accepts stacked inputs
    with the sample axis last.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.n_points:
        raise DimensionError(
            f"f has {f.shape[-1]} samples, grid expects {grid.n_points}"
        )
    integral = cumulative_trapezoid(f, grid.ds)
    return integral - integral.mean(axis=-1, keepdims=True)


def pressure_schedule(
    t_r: float, channel_index: int, cfg: ActuationConfig, ch: ChannelState
) -> float:
    """Pressure in one channel at time ``t_r`` within the current period.

    p_i = p_m * sin(c * 2*pi*t_r/T + (i-1)*pi/2)
          + b_prev_i + (b_i - b_prev_i) * t_r / T

    The sinusoid phase steps a quarter period per channel; the bias ramps
    linearly from last period's value to the commanded one, which keeps the
    pressure continuous across period boundaries once biases are rolled.
    """
    if not 0.0 <= t_r <= cfg.period:
        raise DomainError(f"t_r={t_r} outside [0, {cfg.period}]")
    if channel_index < 1 or channel_index > N_CHANNELS:
        raise IndexError(f"channel_index must be in 1..4, got {channel_index}")
    i = channel_index - 1
    phase = ch.direction * 2.0 * np.pi * t_r / cfg.period + i * np.pi / 2.0
    ramp = (ch.bias[i] - ch.bias_prev[i]) * t_r / cfg.period
    return float(cfg.pressure_magnitude * np.sin(phase) + ch.bias_prev[i] + ramp)


def channel_pressures(t_r, cfg: ActuationConfig, ch: ChannelState) -> np.ndarray:
    """All four channel pressures at once; ``t_r`` may be an array, in which
    case the result has shape (len(t_r), 4)."""
    t_r = np.asarray(t_r, dtype=float)
    if np.any(t_r < 0) or np.any(t_r > cfg.period):
        raise DomainError("t_r outside [0, period]")
    phases = np.arange(N_CHANNELS) * np.pi / 2.0
    tt = t_r[..., None]
    wave = cfg.pressure_magnitude * np.sin(
        ch.direction * 2.0 * np.pi * tt / cfg.period + phases
    )
    ramp = ch.bias_prev + (ch.bias - ch.bias_prev) * tt / cfg.period
    return wave + ramp


def spatial_weights(s, length: float) -> np.ndarray:
    """Quarter-phase sinusoidal weights mapping channel pressures to the
    local bending pressure difference; shape (..., 4).

    The 1/2 factor normalizes the four-channel sum so that with zero biases
    the peak |delta_p| equals the peak channel pressure. Channels i and i+2
    get opposite-sign weights, which is the antagonistic chamber pairing.
    """
    s = np.asarray(s, dtype=float)
    phases = np.arange(N_CHANNELS) * np.pi / 2.0
    return 0.5 * np.sin(2.0 * np.pi * s[..., None] / length - phases)


def pressure_difference(s, pressures: np.ndarray, grid: BodyGrid) -> np.ndarray:
    """Local bending pressure difference at arc position(s) ``s``.

    delta_p(s) = sum_i w_i(s) * p_i with the weights of
    :func:`spatial_weights`.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > grid.length):
        raise DomainError(f"s outside [0, {grid.length}]")
    pressures = np.asarray(pressures, dtype=float)
    if pressures.shape[-1] != N_CHANNELS:
        raise DimensionError("pressures must have 4 entries")
    out = spatial_weights(s_arr, grid.length) @ pressures
    return out if np.ndim(s) else float(out)


def curvature_from_pressure(delta_p: np.ndarray, curvature_gain: float) -> np.ndarray:
    """Elementwise curvature-pressure law: kappa = K_b * delta_p."""
    if not curvature_gain > 0:
        raise DomainError(f"curvature_gain must be > 0, got {curvature_gain}")
    return curvature_gain * np.asarray(delta_p, dtype=float)


def body_positions_from_angles(angles: np.ndarray, ds: float) -> np.ndarray:
    """Mean-zero sample positions from tangent angles, last axis = samples.

    Consecutive samples are connected by chords of exact length ``ds``
    oriented along the midpoint tangent angle (midpoint quadrature), so the
    polyline preserves the body's arc length exactly. Output shape is
    ``angles.shape + (2,)`` with the per-row mean removed.
    """
    angles = np.asarray(angles, dtype=float)
    mid = 0.5 * (angles[..., 1:] + angles[..., :-1])
    steps = ds * np.stack([np.cos(mid), np.sin(mid)], axis=-1)
    pos = np.zeros(angles.shape + (2,))
    np.cumsum(steps, axis=-2, out=pos[..., 1:, :])
    return pos - pos.mean(axis=-2, keepdims=True)


def reconstruct_shape(
    curvature: np.ndarray, heading_mean: float, com, grid: BodyGrid
) -> ShapeField:
    """Rebuild the sampled backbone from curvature and bulk pose.

    Angles are the heading plus the mean-zero anti-derivative of curvature;
    positions are the COM plus mean-zero chord integration of the tangent
    field. Mean angle equals ``heading_mean`` and mean position equals
    ``com`` exactly, and consecutive samples are spaced exactly ``ds``
    apart (inextensibility).
    """
    curvature = np.asarray(curvature, dtype=float)
    if curvature.shape != (grid.n_points,):
        raise DimensionError(
            f"curvature shape {curvature.shape} does not match grid "
            f"({grid.n_points},)"
        )
    angles = heading_mean + mean_zero_antiderivative(curvature, grid)
    positions = body_positions_from_angles(angles, grid.ds) + np.asarray(
        com, dtype=float
    )
    return ShapeField(positions=positions, angles=angles, curvature=curvature)
