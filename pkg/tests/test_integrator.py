import numpy as np
import pytest
from scipy.linalg import expm

from waveplate import (
    ConvergenceError,
    Domain,
    ModalState,
    SourceSpec,
    assemble,
    integrate,
    project_initial_data,
    rhs,
    step_implicit_midpoint,
    step_rk4,
)
from waveplate.geometry import eval_wave_mode
from waveplate.integrator import linear_system_matrix, wave_mode_function

LINEAR = SourceSpec(rho_w=0.0)


def fitted_order(dts, errors):
    return np.polyfit(np.log(dts), np.log(errors), 1)[0]


def quadratic_energy(ops, y):
    s = ModalState.from_vector(0.0, y, ops.n_wave, ops.n_plate)
    return 0.5 * (s.du @ s.du + ops.wave_stiffness @ (s.u * s.u) + s.dw @ ops.plate_mass @ s.dw
                  + s.w @ ops.plate_bending @ s.w)


class TestRhs:
    def test_zero_state(self, ops2):
        spec = SourceSpec(p=3.0, a=1.0, b=1.0, q=3.0)
        d = rhs(ops2, spec, ModalState.zeros(ops2))
        assert not d.to_vector().any()

    def test_pure_plate_displacement(self, ops2):
        s = ModalState.zeros(ops2)
        s.w[0] = 0.3
        d = rhs(ops2, LINEAR, s)
        mu1 = ops2.plate_bending[0, 0]
        assert d.dw[0] == pytest.approx(-mu1 * 0.3, rel=1e-10)
        assert d.w[0] == 0.0

    def test_pure_wave_velocity(self, ops2):
        s = ModalState.zeros(ops2)
        s.du[0] = 0.5
        d = rhs(ops2, LINEAR, s)
        expected = -np.linalg.solve(ops2.plate_mass, ops2.coupling.T @ s.du)
        np.testing.assert_allclose(d.dw, expected, atol=1e-13)
        np.testing.assert_allclose(d.u, s.du)

    def test_linear_matrix_structure(self, ops_small):
        a = linear_system_matrix(ops_small, LINEAR)
        assert a.shape == (16, 16)
        with pytest.raises(ValueError):
            linear_system_matrix(ops_small, SourceSpec(p=3.0))


class TestRK4:
    def test_zero_state(self, ops2):
        s = step_rk4(ops2, LINEAR, ModalState.zeros(ops2), 1e-3)
        assert not s.to_vector().any()
        assert s.t == pytest.approx(1e-3)

    def test_single_plate_mode_order(self):
        """Damped oscillator w'' + w' + mu w = 0, exact solution in closed form."""
        ops = assemble(Domain(2), 1, 1).without_coupling()
        mu = ops.plate_bending[0, 0] / ops.plate_mass[0, 0]
        omega = np.sqrt(mu - 0.25)
        T = 1.3 * 2 * np.pi / omega
        decay = np.exp(-0.5 * T)
        exact_w = decay * (np.cos(omega * T) + 0.5 / omega * np.sin(omega * T))
        exact_dw = -decay * mu / omega * np.sin(omega * T)
        errors, dts = [], []
        for n in (64, 128, 256):
            dt = T / n
            s = ModalState.zeros(ops)
            s.w[0] = 1.0
            for _ in range(n):
                s = step_rk4(ops, LINEAR, s, dt)
            errors.append(max(abs(s.w[0] - exact_w), abs(s.dw[0] - exact_dw) / omega))
            dts.append(dt)
        assert fitted_order(dts, errors) >= 3.5

    def test_matches_matrix_exponential(self, ops_small, rng):
        a = linear_system_matrix(ops_small, LINEAR)
        y0 = rng.standard_normal(16) * 0.1
        T = 0.2
        exact = expm(a * T) @ y0
        errs, dts = [], []
        for n in (800, 1600, 3200):
            traj = integrate(ops_small, LINEAR, ModalState.from_vector(0, y0, 4, 4), T, T / n,
                             stride=n)
            errs.append(np.abs(traj.final.to_vector() - exact).max() / np.abs(exact).max())
            dts.append(T / n)
        assert errs[-1] < 1e-7
        assert fitted_order(dts, errs) >= 3.5

    def test_reversibility(self, ops2, rng):
        ops = ops2.without_coupling().without_damping()
        s0 = ModalState.from_vector(0.0, rng.standard_normal(32) * 0.1, 8, 8)
        dt = 1e-4
        back = step_rk4(ops, LINEAR, step_rk4(ops, LINEAR, s0, dt), -dt)
        np.testing.assert_allclose(back.to_vector()[:16], s0.to_vector()[:16], atol=1e-10)

    def test_zero_dt(self, ops2):
        with pytest.raises(ValueError):
            step_rk4(ops2, LINEAR, ModalState.zeros(ops2), 0.0)


class TestMidpoint:
    def test_zero_state(self, ops2):
        s = step_implicit_midpoint(ops2, LINEAR, ModalState.zeros(ops2), 1e-3)
        assert not s.to_vector().any()

    def test_conserves_quadratic_energy(self, ops2, rng):
        ops = ops2.without_coupling().without_damping()
        y = rng.standard_normal(32) * 0.1
        s = ModalState.from_vector(0.0, y, 8, 8)
        e0 = quadratic_energy(ops, y)
        for _ in range(20):
            s, its = step_implicit_midpoint(ops, LINEAR, s, 1e-4, tol=1e-15, max_iter=200,
                                            return_iterations=True)
            e = quadratic_energy(ops, s.to_vector())
            assert abs(e - e0) <= 1e-12 * e0
            e0 = e
            assert its >= 1

    def test_order(self, ops_small, rng):
        a = linear_system_matrix(ops_small, LINEAR)
        y0 = rng.standard_normal(16) * 0.1
        T = 0.1
        exact = expm(a * T) @ y0
        errs, dts = [], []
        for n in (400, 800, 1600):
            traj = integrate(ops_small, LINEAR, ModalState.from_vector(0, y0, 4, 4), T, T / n,
                             stride=n, scheme="midpoint")
            errs.append(np.abs(traj.final.to_vector() - exact).max())
            dts.append(T / n)
        assert fitted_order(dts, errs) >= 1.8

    def test_convergence_failure_reported(self, ops2):
        dt = 2.0 / ops2.max_frequency
        s = ModalState.zeros(ops2)
        s.w[-1] = 1.0
        with pytest.raises(ConvergenceError):
            step_implicit_midpoint(ops2, LINEAR, s, dt, tol=1e-12)

    def test_bad_arguments(self, ops2):
        with pytest.raises(ValueError):
            step_implicit_midpoint(ops2, LINEAR, ModalState.zeros(ops2), -1.0)


class TestIntegrate:
    def test_zero_data(self, ops2):
        traj = integrate(ops2, SourceSpec(p=3.0, a=1.0), ModalState.zeros(ops2), 1.0, 1e-2)
        assert not traj.vectors.any()
        assert len(traj) == 101
        assert not traj.blowup

    def test_sampling(self, ops_small):
        s = ModalState.zeros(ops_small)
        s.u[0] = 1.0
        traj = integrate(ops_small, LINEAR, s, 0.1, 1e-3, stride=10)
        np.testing.assert_allclose(traj.times, np.linspace(0, 0.1, 11), atol=1e-12)
        assert np.all(np.diff(traj.times) > 0)
        assert traj.stride == 10 and traj.dt == 1e-3
        assert traj[3] == traj.samples[3]

    def test_deterministic(self, ops_small):
        s = ModalState.zeros(ops_small)
        s.u[:2] = [1.0, 0.5]
        spec = SourceSpec(p=3.0, a=1.0)
        a = integrate(ops_small, spec, s, 0.5, 1e-3)
        b = integrate(ops_small, spec, s, 0.5, 1e-3)
        assert np.array_equal(a.vectors, b.vectors)

    def test_blowup_flag(self):
        ops = assemble(Domain(2), 4, 4)
        s = ModalState.zeros(ops)
        s.w[0] = 20.0
        traj = integrate(ops, SourceSpec(rho_w=0.0, b=1.0, q=3.0), s, 5.0, 1e-4, stride=10)
        assert traj.blowup
        assert 0 < traj.halt_time < 1.0
        assert np.isfinite(traj.vectors).all()

    def test_custom_threshold(self, ops_small):
        s = ModalState.zeros(ops_small)
        s.u[0] = 1.0
        traj = integrate(ops_small, LINEAR, s, 1.0, 1e-3, threshold=0.5)
        assert traj.blowup and traj.halt_time == pytest.approx(1e-3)

    def test_validation(self, ops_small):
        s = ModalState.zeros(ops_small)
        with pytest.raises(ValueError):
            integrate(ops_small, LINEAR, s, 1.0, 1e-3, stride=0)
        with pytest.raises(ValueError):
            integrate(ops_small, LINEAR, s, -1.0, 1e-3)
        with pytest.raises(ValueError):
            integrate(ops_small, LINEAR, s, 1.0, 1e-3, scheme="euler")


class TestProjection:
    def test_zero(self, ops2):
        assert not project_initial_data(ops2).to_vector().any()

    def test_reproduces_basis_element(self, ops2):
        s = project_initial_data(ops2, u0_fn=wave_mode_function(ops2, 0))
        expected = np.zeros(8)
        expected[0] = 1.0
        np.testing.assert_allclose(s.u, expected, atol=1e-10)

    def test_two_modes(self, ops2):
        m0, m3 = ops2.wave_basis[0], ops2.wave_basis[3]
        s = project_initial_data(
            ops2, u1_fn=lambda x: eval_wave_mode(m0, x) + 0.5 * eval_wave_mode(m3, x))
        expected = np.zeros(8)
        expected[[0, 3]] = [1.0, 0.5]
        np.testing.assert_allclose(s.du, expected, atol=1e-10)

    def test_plate_mode(self, ops2):
        s = project_initial_data(ops2, w0_fn=lambda y: 0.2 * ops2.plate_basis.values(y)[:, 2])
        expected = np.zeros(8)
        expected[2] = 0.2
        np.testing.assert_allclose(s.w, expected, atol=1e-10)

    def test_dim3_plate_projection_solves_with_mass(self):
        ops = assemble(Domain(3), 4, 4)
        target = np.array([0.1, -0.2, 0.05, 0.3])
        s = project_initial_data(ops, w1_fn=lambda y: ops.plate_basis.values(y) @ target)
        np.testing.assert_allclose(s.dw, target, atol=1e-10)


def test_state_roundtrip(ops2, rng):
    y = rng.standard_normal(32)
    s = ModalState.from_vector(0.5, y, 8, 8)
    assert np.array_equal(s.to_vector(), y)
    assert s.is_finite() and s.max_abs() == np.abs(y).max()
    assert s != ModalState.from_vector(0.5, y + 1, 8, 8)
