"""Planar rigid-bulk dynamics of the snake under anisotropic ground friction.

Each backbone sample slides against the ground and feels a Coulomb-type
friction density whose coefficient depends on the slip direction relative
to the local body tangent: forward, backward, and transverse coefficients
differ, which is what converts the traveling curvature wave into net
thrust. Internal elastic forces cancel when the per-point force balance is
integrated over the whole body, so only the friction integral drives the
center of mass and only its moment drives the heading:

    M * a_com   = sum_s f_fric(s) * ds          (M = rho * L)
    I * alpha   = sum_s (x(s) - com) x f_fric(s) * ds

with the rotational inertia recomputed from the current discrete shape.
Shape itself is not a dynamic degree of freedom: curvature follows the
pressure law instantaneously, and its rate enters only through the
shape-change term of the per-sample velocity field.

Integration is semi-implicit Euler: accelerations update velocities, the
new velocities update the pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError
from .kinematics import (
    ActuationConfig,
    BodyGrid,
    ChannelState,
    ShapeField,
    channel_pressures,
    curvature_from_pressure,
    mean_zero_antiderivative,
    reconstruct_shape,
    spatial_weights,
)

# Slip-velocity regularization: u_hat = v / (|v| + VELOCITY_EPS), so friction
# fades smoothly to zero at rest instead of being undefined.
VELOCITY_EPS = 1e-6


@dataclass(frozen=True)
class PhysicalParams:
    """Ground interaction constants.

    rho: linear density (kg/m); g: gravity (m/s^2); the mu_* are the
    friction coefficients for slip along the body tangent (forward),
    against it (backward), and across it (transverse). Forward-biased
    anisotropy (mu_forward <= mu_backward) plus mu_transverse > mu_forward
    is what makes serpentine gaits move.
    """

    rho: float = 1.0
    g: float = 9.81
    mu_forward: float = 0.05
    mu_backward: float = 0.1
    mu_transverse: float = 0.3

    def __post_init__(self):
        for name in ("rho", "g", "mu_forward", "mu_backward", "mu_transverse"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.mu_forward > self.mu_backward:
            raise ConfigError("mu_forward must not exceed mu_backward")


@dataclass(frozen=True)
class SnakeState:
    """Full physical configuration at one instant.

    curvature_prev holds the previous substep's curvature so the
    shape-change velocity can be formed by backward difference.
    """

    com: np.ndarray
    com_velocity: np.ndarray
    heading: float
    heading_rate: float
    curvature: np.ndarray
    curvature_prev: np.ndarray
    sim_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(
            self, "com_velocity", np.asarray(self.com_velocity, dtype=float)
        )
        object.__setattr__(self, "curvature", np.asarray(self.curvature, dtype=float))
        object.__setattr__(
            self, "curvature_prev", np.asarray(self.curvature_prev, dtype=float)
        )


def initial_state(
    channel: ChannelState, actuation: ActuationConfig, grid: BodyGrid
) -> SnakeState:
    """Robot at rest at the origin with heading 0.

    Curvature is whatever the pressure law dictates at the start of a
    period (pressure acts instantaneously), with no shape-change velocity.
    """
    kappa = curvature_at_phase(0.0, channel, actuation, grid)
    return SnakeState(
        com=np.zeros(2),
        com_velocity=np.zeros(2),
        heading=0.0,
        heading_rate=0.0,
        curvature=kappa,
        curvature_prev=kappa.copy(),
        sim_time=0.0,
    )


def friction_at_point(
    unit_velocity: np.ndarray, forward_dir: np.ndarray, params: PhysicalParams
) -> np.ndarray:
    """Anisotropic Coulomb friction force density (N/m) at one sample.

    f = -rho*g*( mu_t (u.t) t + mu_l (u.f) f ),  mu_l = mu_f if u.f >= 0
    else mu_b, where t is the left normal of the forward direction f. The
    tie u.f == 0 selects the forward coefficient.
    """
    u = np.asarray(unit_velocity, dtype=float)
    f = np.asarray(forward_dir, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(f))):
        raise NumericError("non-finite slip or tangent direction")
    if abs(np.hypot(f[0], f[1]) - 1.0) > 1e-9:
        raise DomainError("forward_dir must be a unit vector")
    t = np.array([-f[1], f[0]])
    uf = u @ f
    ut = u @ t
    mu_l = params.mu_forward if uf >= 0.0 else params.mu_backward
    return -params.rho * params.g * (params.mu_transverse * ut * t + mu_l * uf * f)


def velocity_field(
    state: SnakeState, shape: ShapeField, dt: float, grid: BodyGrid
) -> np.ndarray:
    """Per-sample world velocities (n, 2).

    Decomposition: bulk translation + rigid rotation about the COM + the
    mean-zero shape-change rate obtained by differencing the shapes built
    from curvature and curvature_prev at the identical bulk pose. The
    discrete mean of the field is exactly the COM velocity.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    r = shape.positions - state.com
    rot = state.heading_rate * np.stack([-r[:, 1], r[:, 0]], axis=1)
    prev = reconstruct_shape(state.curvature_prev, state.heading, state.com, grid)
    shape_rate = (shape.positions - prev.positions) / dt
    return state.com_velocity + rot + shape_rate


def _friction_field(
    velocities: np.ndarray, angles: np.ndarray, params: PhysicalParams
) -> np.ndarray:
    """Vectorized friction density over all samples; velocities (n,2)."""
    speed = np.hypot(velocities[:, 0], velocities[:, 1])
    u = velocities / (speed + VELOCITY_EPS)[:, None]
    fx, fy = np.cos(angles), np.sin(angles)
    uf = u[:, 0] * fx + u[:, 1] * fy
    ut = -u[:, 0] * fy + u[:, 1] * fx
    mu_l = np.where(uf >= 0.0, params.mu_forward, params.mu_backward)
    ct = params.mu_transverse * ut
    cl = mu_l * uf
    scale = -params.rho * params.g
    out = np.empty_like(velocities)
    out[:, 0] = scale * (ct * -fy + cl * fx)
    out[:, 1] = scale * (ct * fx + cl * fy)
    return out


def _check_finite_forces(force: np.ndarray) -> None:
    finite = np.isfinite(force)
    if not finite.all():
        idx = int(np.argmin(finite.all(axis=1)))
        raise NumericError(f"non-finite friction force at sample {idx}")


def _bulk_update(
    state_vals, force, positions, params: PhysicalParams, grid: BodyGrid, dt: float
):
    """Shared semi-implicit Euler bulk update; returns new pose/velocities."""
    com, v_com, heading, omega = state_vals
    ds = grid.ds
    accel = force.sum(axis=0) * ds / (params.rho * grid.length)
    r = positions - com
    torque = float(np.sum(r[:, 0] * force[:, 1] - r[:, 1] * force[:, 0]) * ds)
    inertia = float(params.rho * np.sum(r[:, 0] ** 2 + r[:, 1] ** 2) * ds)
    alpha = torque / inertia
    v_new = v_com + accel * dt
    omega_new = omega + alpha * dt
    com_new = com + v_new * dt
    heading_new = heading + omega_new * dt
    return com_new, v_new, heading_new, omega_new


def curvature_at_phase(
    t_r, channel: ChannelState, actuation: ActuationConfig, grid: BodyGrid
) -> np.ndarray:
    """Curvature profile dictated by the pressure law at phase(s) t_r."""
    pressures = channel_pressures(t_r, actuation, channel)
    delta_p = pressures @ spatial_weights(grid.s, grid.length).T
    return curvature_from_pressure(delta_p, actuation.curvature_gain)


def step(
    state: SnakeState,
    channel: ChannelState,
    actuation: ActuationConfig,
    params: PhysicalParams,
    grid: BodyGrid,
    dt: float,
) -> SnakeState:
    """Advance the bulk state by one semi-implicit Euler substep.

    Friction is evaluated on the current shape and velocity field; the
    integrated force and torque give the COM and heading accelerations;
    velocities update first, then pose. Curvature is then advanced to the
    pressure-law profile at the new phase within the actuation period.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if dt > actuation.period / 20:
        raise DomainError("dt must be at most period/20 to resolve the wave")

    shape = reconstruct_shape(state.curvature, state.heading, state.com, grid)
    vel = velocity_field(state, shape, dt, grid)
    force = _friction_field(vel, shape.angles, params)
    _check_finite_forces(force)

    com, v_com, heading, omega = _bulk_update(
        (state.com, state.com_velocity, state.heading, state.heading_rate),
        force,
        shape.positions,
        params,
        grid,
        dt,
    )

    # Land exactly on the period end when rounding overshoots it; the bias
    # ramp makes curvature discontinuous across the boundary until the
    # caller rolls biases, so a spurious wrap must not happen.
    t_r = np.fmod(state.sim_time, actuation.period) + dt
    if t_r > actuation.period:
        if t_r - actuation.period < 0.5 * dt:
            t_r = actuation.period
        else:
            t_r -= actuation.period
    kappa_new = curvature_at_phase(float(t_r), channel, actuation, grid)

    return SnakeState(
        com=com,
        com_velocity=v_com,
        heading=heading,
        heading_rate=omega,
        curvature=kappa_new,
        curvature_prev=state.curvature,
        sim_time=state.sim_time + dt,
    )


def advance_period(
    state: SnakeState,
    channel: ChannelState,
    actuation: ActuationConfig,
    params: PhysicalParams,
    grid: BodyGrid,
    n_substeps: int = 100,
    trace: list | None = None,
) -> SnakeState:
    """Advance through one full actuation period with n_substeps Euler steps.

    Equivalent to calling :func:`step` n_substeps times with dt = T/n, but
    the kinematic quantities for the whole period (curvature profiles,
    body-frame shapes and tangents) are precomputed in one vectorized pass
    and planar vectors are packed into complex scalars, which is what makes
    episode rollouts affordable. If ``trace`` is given, a
    (time, com_x, com_y, heading) row is appended after every substep.
    """
    if n_substeps < 20:
        raise DomainError("n_substeps must be at least 20 to resolve the wave")
    period = actuation.period
    dt = period / n_substeps
    t0 = float(np.fmod(state.sim_time, period))
    phases = np.minimum(t0 + dt * np.arange(1, n_substeps + 1), period)

    kappa = np.empty((n_substeps + 2, grid.n_points))
    kappa[0] = state.curvature_prev
    kappa[1] = state.curvature
    kappa[2:] = curvature_at_phase(phases, channel, actuation, grid)

    # Body-frame geometry for every substep: tangents as unit complex
    # numbers, positions as mean-zero complex points, shape-change rates by
    # backward difference along the substep axis.
    angles_body = mean_zero_antiderivative(kappa, grid)
    tan_body = np.exp(1j * angles_body)
    mid = 0.5 * (angles_body[:, 1:] + angles_body[:, :-1])
    pos_body = np.zeros_like(tan_body)
    np.cumsum(grid.ds * np.exp(1j * mid), axis=-1, out=pos_body[:, 1:])
    pos_body -= pos_body.mean(axis=-1, keepdims=True)
    rate_body = np.diff(pos_body, axis=0) / dt

    com = complex(state.com[0], state.com[1])
    v_com = complex(state.com_velocity[0], state.com_velocity[1])
    heading = state.heading
    omega = state.heading_rate

    ds = grid.ds
    inv_mass = ds / (params.rho * grid.length)
    rho_ds = params.rho * ds
    neg_rho_g = -params.rho * params.g
    mu_f, mu_b, mu_t = params.mu_forward, params.mu_backward, params.mu_transverse

    for j in range(1, n_substeps + 1):
        spin = complex(np.cos(heading), np.sin(heading))
        r = spin * pos_body[j]
        forward = spin * tan_body[j]
        vel = v_com + 1j * omega * r + spin * rate_body[j - 1]

        u = vel / (np.abs(vel) + VELOCITY_EPS)
        slip = u * np.conj(forward)  # real: along-body, imag: transverse
        uf = slip.real
        mu_l = np.where(uf >= 0.0, mu_f, mu_b)
        force = forward * (neg_rho_g * (mu_l * uf + 1j * (mu_t * slip.imag)))
        if not np.all(np.isfinite(force)):
            idx = int(np.argmin(np.isfinite(force)))
            raise NumericError(f"non-finite friction force at sample {idx}")

        accel = force.sum() * inv_mass
        torque = (np.conj(r) * force).imag.sum() * ds
        inertia = rho_ds * (r.real**2 + r.imag**2).sum()
        v_com = v_com + accel * dt
        omega = omega + (torque / inertia) * dt
        com = com + v_com * dt
        heading = heading + omega * dt
        if trace is not None:
            trace.append((state.sim_time + j * dt, com.real, com.imag, heading))

    return SnakeState(
        com=np.array([com.real, com.imag]),
        com_velocity=np.array([v_com.real, v_com.imag]),
        heading=heading,
        heading_rate=omega,
        curvature=kappa[-1],
        curvature_prev=kappa[-2],
        sim_time=state.sim_time + period,
    )


def kinetic_energy(state: SnakeState, params: PhysicalParams, grid: BodyGrid) -> float:
    """Translational plus rotational kinetic energy of the bulk motion."""
    shape = reconstruct_shape(state.curvature, state.heading, state.com, grid)
    r = shape.positions - state.com
    inertia = params.rho * np.sum(r[:, 0] ** 2 + r[:, 1] ** 2) * grid.ds
    mass = params.rho * grid.length
    return float(
        0.5 * mass * np.dot(state.com_velocity, state.com_velocity)
        + 0.5 * inertia * state.heading_rate**2
    )
