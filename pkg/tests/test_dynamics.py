import numpy as np
import pytest

from snakerl.dynamics import (
    VELOCITY_EPS,
    PhysicalParams,
    SnakeState,
    advance_period,
    friction_at_point,
    initial_state,
    kinetic_energy,
    step,
    velocity_field,
)
from snakerl.errors import ConfigError, DomainError, NumericError
from snakerl.kinematics import (
    ActuationConfig,
    BodyGrid,
    ChannelState,
    reconstruct_shape,
)

GRID = BodyGrid()
PARAMS = PhysicalParams()
ACT = ActuationConfig()


def gait_channel(bias=0.5):
    b = np.full(4, bias)
    return ChannelState(bias=b, bias_prev=b.copy())


def random_state(rng, grid=GRID):
    return SnakeState(
        com=rng.uniform(-1, 1, 2),
        com_velocity=rng.uniform(-0.2, 0.2, 2),
        heading=rng.uniform(-np.pi, np.pi),
        heading_rate=rng.uniform(-1, 1),
        curvature=rng.uniform(-10, 10, grid.n_points),
        curvature_prev=rng.uniform(-10, 10, grid.n_points),
        sim_time=0.0,
    )


class TestFrictionAtPoint:
    def test_forward_slip(self):
        f = np.array([1.0, 0.0])
        out = friction_at_point(f, f, PARAMS)
        expected = -PARAMS.rho * PARAMS.g * PARAMS.mu_forward * f
        assert np.allclose(out, expected, atol=1e-12)

    def test_backward_slip_uses_backward_coefficient(self):
        f = np.array([0.0, 1.0])
        out = friction_at_point(-f, f, PARAMS)
        expected = PARAMS.rho * PARAMS.g * PARAMS.mu_backward * f
        assert np.allclose(out, expected, atol=1e-12)

    def test_transverse_slip(self):
        angle = 0.7
        f = np.array([np.cos(angle), np.sin(angle)])
        t = np.array([-f[1], f[0]])
        out = friction_at_point(t, f, PARAMS)
        expected = -PARAMS.rho * PARAMS.g * PARAMS.mu_transverse * t
        assert np.allclose(out, expected, atol=1e-12)

    def test_rejects_non_unit_tangent(self):
        with pytest.raises(DomainError):
            friction_at_point(np.array([1.0, 0.0]), np.array([2.0, 0.0]), PARAMS)

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            friction_at_point(np.array([np.nan, 0.0]), np.array([1.0, 0.0]), PARAMS)


class TestPhysicalParams:
    def test_rejects_forward_heavier_than_backward(self):
        with pytest.raises(ConfigError):
            PhysicalParams(mu_forward=0.5, mu_backward=0.1)

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            PhysicalParams(g=0.0)


class TestVelocityField:
    def test_rigid_translation(self):
        rng = np.random.default_rng(0)
        kappa = rng.uniform(-5, 5, GRID.n_points)
        state = SnakeState(
            com=np.array([0.2, -0.1]),
            com_velocity=np.array([0.3, 0.4]),
            heading=0.5,
            heading_rate=0.0,
            curvature=kappa,
            curvature_prev=kappa.copy(),
        )
        shape = reconstruct_shape(kappa, state.heading, state.com, GRID)
        vel = velocity_field(state, shape, 0.01, GRID)
        assert np.allclose(vel, state.com_velocity, atol=1e-12)

    def test_rigid_rotation(self):
        rng = np.random.default_rng(1)
        kappa = rng.uniform(-5, 5, GRID.n_points)
        omega = 0.8
        state = SnakeState(
            com=np.zeros(2),
            com_velocity=np.zeros(2),
            heading=0.0,
            heading_rate=omega,
            curvature=kappa,
            curvature_prev=kappa.copy(),
        )
        shape = reconstruct_shape(kappa, 0.0, (0.0, 0.0), GRID)
        vel = velocity_field(state, shape, 0.01, GRID)
        r = shape.positions
        expected = omega * np.stack([-r[:, 1], r[:, 0]], axis=1)
        assert np.allclose(vel, expected, atol=1e-12)

    def test_mean_equals_com_velocity(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            state = random_state(rng)
            shape = reconstruct_shape(state.curvature, state.heading, state.com, GRID)
            vel = velocity_field(state, shape, 0.01, GRID)
            assert np.abs(vel.mean(axis=0) - state.com_velocity).max() < 1e-9

    def test_requires_positive_dt(self):
        state = random_state(np.random.default_rng(3))
        shape = reconstruct_shape(state.curvature, state.heading, state.com, GRID)
        with pytest.raises(DomainError):
            velocity_field(state, shape, 0.0, GRID)


class TestStep:
    def test_vanishing_friction_leaves_velocity(self):
        tiny = PhysicalParams(mu_forward=1e-12, mu_backward=1e-12, mu_transverse=1e-12)
        state = random_state(np.random.default_rng(4))
        out = step(state, gait_channel(), ACT, tiny, GRID, ACT.period / 100)
        assert np.abs(out.com_velocity - state.com_velocity).max() < 1e-10

    def test_equilibrium_at_rest(self):
        act = ActuationConfig(pressure_magnitude=0.0)
        ch = ChannelState()  # zero biases
        state = initial_state(ch, act, GRID)
        assert np.all(state.curvature == 0.0)
        out = step(state, ch, act, PARAMS, GRID, act.period / 100)
        assert np.all(out.com == state.com)
        assert np.all(out.com_velocity == 0.0)
        assert out.heading == state.heading
        assert out.heading_rate == 0.0
        assert out.sim_time == pytest.approx(act.period / 100)

    def test_com_acceleration_matches_friction_sum(self):
        # Brute-force oracle: per-sample friction from the public pieces.
        rng = np.random.default_rng(5)
        dt = ACT.period / 100
        for _ in range(5):
            state = random_state(rng)
            out = step(state, gait_channel(), ACT, PARAMS, GRID, dt)
            accel = (out.com_velocity - state.com_velocity) / dt

            shape = reconstruct_shape(state.curvature, state.heading, state.com, GRID)
            vel = velocity_field(state, shape, dt, GRID)
            total = np.zeros(2)
            for i in range(GRID.n_points):
                speed = np.linalg.norm(vel[i])
                u = vel[i] / (speed + VELOCITY_EPS)
                fwd = np.array([np.cos(shape.angles[i]), np.sin(shape.angles[i])])
                total += friction_at_point(u, fwd, PARAMS)
            expected = total * GRID.ds / (PARAMS.rho * GRID.length)
            assert np.abs(accel - expected).max() < 1e-9

    def test_rejects_bad_dt(self):
        state = random_state(np.random.default_rng(6))
        with pytest.raises(DomainError):
            step(state, gait_channel(), ACT, PARAMS, GRID, 0.0)
        with pytest.raises(DomainError):
            step(state, gait_channel(), ACT, PARAMS, GRID, ACT.period / 10)

    def test_non_finite_state_raises_numeric_error(self):
        state = random_state(np.random.default_rng(7))
        bad = SnakeState(
            com=np.array([np.nan, 0.0]),
            com_velocity=state.com_velocity,
            heading=state.heading,
            heading_rate=state.heading_rate,
            curvature=state.curvature,
            curvature_prev=state.curvature_prev,
        )
        with pytest.raises(NumericError):
            step(bad, gait_channel(), ACT, PARAMS, GRID, ACT.period / 100)


class TestInvariants:
    def test_zero_actuation_rest_invariance(self):
        act = ActuationConfig(pressure_magnitude=0.0)
        ch = ChannelState()
        state = initial_state(ch, act, GRID)
        for _ in range(1000):
            state = step(state, ch, act, PARAMS, GRID, act.period / 50)
        assert np.abs(state.com).max() < 1e-12
        assert np.all(state.com_velocity == 0.0)

    def test_friction_dissipates_kinetic_energy(self):
        #

        # Frozen shape (no actuation work): energy must decay while the
        # sliding speed stays well above the per-step friction impulse.
        act = ActuationConfig(pressure_magnitude=0.0)
        ch = ChannelState()
        base = initial_state(ch, act, GRID)
        state = SnakeState(
            com=base.com,
            com_velocity=np.array([0.25, -0.1]),
            heading=0.0,
            heading_rate=1.5,
            curvature=base.curvature,
            curvature_prev=base.curvature_prev,
        )
        energy = kinetic_energy(state, PARAMS, GRID)
        for _ in range(200):
            state = step(state, ch, act, PARAMS, GRID, 1e-3)
            e_next = kinetic_energy(state, PARAMS, GRID)
            assert e_next <= energy + 1e-15
            energy = e_next

    def test_forward_locomotion_with_default_gait(self):
        assert PARAMS.mu_transverse > PARAMS.mu_forward
        ch = gait_channel()
        state = initial_state(ch, ACT, GRID)
        heading0 = state.heading
        for _ in range(5):
            state = advance_period(state, ch, ACT, PARAMS, GRID, 100)
        along = state.com @ np.array([np.cos(heading0), np.sin(heading0)])
        assert along > 0.0

    def test_advance_period_matches_sequential_steps(self):
        rng = np.random.default_rng(8)
        ch = ChannelState(bias=rng.uniform(0, 1, 4), bias_prev=rng.uniform(0, 1, 4))
        state = initial_state(ch, ACT, GRID)
        n = 40
        fast = advance_period(state, ch, ACT, PARAMS, GRID, n)
        slow = state
        for _ in range(n):
            slow = step(slow, ch, ACT, PARAMS, GRID, ACT.period / n)
        assert np.abs(fast.com - slow.com).max() < 1e-12
        assert abs(fast.heading - slow.heading) < 1e-12
        assert np.abs(fast.com_velocity - slow.com_velocity).max() < 1e-12
        assert np.abs(fast.curvature - slow.curvature).max() < 1e-12
