import numpy as np
import pytest

from waveplate import Domain, ModalState, Quadrature, SourceSpec, assemble, eval_fields
from waveplate.assembly import (
    plate_source_potential,
    project_plate_source,
    project_wave_source,
    wave_gradient_gram,
    wave_gram,
    wave_source_potential,
)
from waveplate.geometry import ConfigurationError
from waveplate.integrator import rhs_vector

from test_geometry import BEAM_ROOTS, classic_beam


def simpson(f, n=200):
    x = np.linspace(0.0, 1.0, n + 1)
    y = f(x)
    return (x[1] / 3) * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def sigma1_oracle(x):
    beta = BEAM_ROOTS[0]
    norm = np.sqrt(simpson(lambda s: classic_beam(beta, s) ** 2, 2000))
    return classic_beam(beta, x) / norm


class TestAssemble:
    def test_coupling_scalar(self):
        ops = assemble(Domain(2), 1, 1)
        # fix the sign convention of the oracle mode by its midpoint value
        sign = np.sign(ops.plate_basis.values(np.array([0.5]))[0, 0] * sigma1_oracle(0.5))
        oracle = simpson(lambda x: 2 * np.sin(np.pi * x) * sign * sigma1_oracle(x))
        assert ops.coupling.shape == (1, 1)
        assert ops.coupling[0, 0] == pytest.approx(oracle, rel=1e-7)

    def test_first_eigenvalue(self, ops2):
        assert ops2.wave_stiffness[0] == pytest.approx(np.pi ** 2 * 1.25)
        assert ops2.wave_stiffness[0] == pytest.approx(12.337, abs=1e-3)

    def test_bending_is_beta4(self):
        ops = assemble(Domain(2), 3, 2)
        np.testing.assert_allclose(ops.plate_bending, np.diag(BEAM_ROOTS[:2] ** 4), rtol=1e-6,
                                   atol=1e-6 * BEAM_ROOTS[1] ** 4)

    def test_grams(self, ops2):
        assert np.abs(wave_gram(ops2) - np.eye(8)).max() <= 1e-8
        np.testing.assert_allclose(np.diag(wave_gradient_gram(ops2)), ops2.wave_stiffness,
                                   rtol=1e-6)
        np.testing.assert_allclose(ops2.plate_damping, ops2.plate_mass)
        assert np.linalg.eigvalsh(ops2.plate_bending).min() > 0

    def test_coupling_matches_trace_projection(self, ops2):
        # coupling rows are the plate L2 projections of the traces
        q = Quadrature(60)
        nodes, weights = q.gamma(Domain(2))
        from waveplate.geometry import trace_wave_mode
        dense = np.stack([trace_wave_mode(m)(nodes) for m in ops2.wave_basis], axis=-1)
        ref = (dense * weights[:, None]).T @ ops2.plate_basis.values(nodes)
        np.testing.assert_allclose(ops2.coupling, ref, atol=1e-10)

    def test_dim3(self):
        ops = assemble(Domain(3), 6, 4)
        assert ops.coupling.shape == (6, 4)
        assert np.abs(wave_gram(ops) - np.eye(6)).max() <= 1e-8
        np.testing.assert_allclose(ops.plate_bending, ops.plate_bending.T)

    def test_insufficient_quadrature(self):
        with pytest.raises(ConfigurationError):
            assemble(Domain(2), 30, 2, Quadrature(4))

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            assemble(Domain(2), 0, 2)

    def test_scaled_copies(self, ops2):
        off = ops2.scaled(coupling=0.0, damping=0.0)
        assert not off.coupling.any() and not off.plate_damping.any()
        assert ops2.scaled() is ops2
        assert ops2.coupling.any()


class TestSources:
    def test_linear_wave_source(self, ops2, rng):
        u = rng.standard_normal(8)
        np.testing.assert_allclose(project_wave_source(ops2, u, SourceSpec(p=1.0)), u, atol=1e-10)

    def test_zero(self, ops2):
        spec = SourceSpec(p=3.0, a=1.0, b=2.0, q=3.0)
        assert not project_wave_source(ops2, np.zeros(8), spec).any()
        assert not project_plate_source(ops2, np.zeros(8), spec).any()

    def test_cubic_single_mode(self, ops2):
        # int e_1^4 = 16 * (3/8) * (3/8) for e_1 = 2 sin(pi x) sin(pi y / 2)
        alpha = 0.7
        u = np.zeros(8)
        u[0] = alpha
        f = project_wave_source(ops2, u, SourceSpec(p=3.0))
        assert f[0] == pytest.approx(alpha ** 3 * 2.25, rel=1e-12)

    def test_cubic_dense_oracle(self, ops2, rng):
        u = rng.standard_normal(8)
        dense = Quadrature(80)
        nodes, weights = dense.omega(Domain(2))
        from waveplate.geometry import eval_wave_mode
        e = np.stack([eval_wave_mode(m, nodes) for m in ops2.wave_basis], axis=-1)
        ref = ((e @ u) ** 3 * weights) @ e
        np.testing.assert_allclose(project_wave_source(ops2, u, SourceSpec(p=3.0)), ref,
                                   rtol=1e-10, atol=1e-10)

    def test_linear_plate_source(self, ops2, rng):
        w = rng.standard_normal(8)
        g = project_plate_source(ops2, w, SourceSpec(a=1.0, q=1.0))
        np.testing.assert_allclose(g, ops2.plate_mass @ w, atol=1e-10)

    def test_cubic_plate_single_mode(self, ops2):
        alpha = 1.3
        w = np.zeros(8)
        w[0] = alpha
        sign = np.sign(ops2.plate_basis.values(np.array([0.5]))[0, 0] * sigma1_oracle(0.5))
        oracle = alpha ** 3 * simpson(lambda x: sigma1_oracle(x) ** 4, 4000)
        g = project_plate_source(ops2, w, SourceSpec(b=1.0, q=3.0))
        assert sign ** 4 == 1
        assert g[0] == pytest.approx(oracle, rel=1e-9)

    def test_batched_rows(self, ops2, rng):
        spec = SourceSpec(p=3.0, b=1.0, q=2.0)
        rows = rng.standard_normal((3, 8))
        batched = project_wave_source(ops2, rows, spec)
        for k in range(3):
            np.testing.assert_allclose(batched[k], project_wave_source(ops2, rows[k], spec))
        batched = project_plate_source(ops2, rows, spec)
        np.testing.assert_allclose(batched[1], project_plate_source(ops2, rows[1], spec))

    def test_overflow_is_not_an_exception(self, ops2):
        u = np.full(8, 1e200)
        f = project_wave_source(ops2, u, SourceSpec(p=3.0))
        assert not np.isfinite(f).all()

    def test_spec_family(self):
        spec = SourceSpec(a=0.5, b=2.0, q=3.0)
        w = np.linspace(-2, 2, 41)
        h = 1e-6
        np.testing.assert_allclose((spec.H(w + h) - spec.H(w - h)) / (2 * h), spec.h(w),
                                   rtol=1e-7, atol=1e-8)
        assert spec.H(0.0) == 0.0
        assert spec.growth_constant == pytest.approx(8.0)
        assert np.all(np.abs(spec.h_prime(w)) <= spec.growth_constant * (np.abs(w) ** 2 + 1))
        with pytest.raises(ValueError):
            SourceSpec(p=0.5)


@pytest.mark.parametrize("spec", [SourceSpec(p=3.0), SourceSpec(p=5.0), SourceSpec(p=2.5),
                                  SourceSpec(p=3.0, rho_w=0.3)])
def test_wave_gradient_consistency(ops_small, spec):
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(20):
        u = rng.standard_normal(ops_small.n_wave)
        grad = project_wave_source(ops_small, u, spec)
        fd = np.empty_like(u)
        for i in range(len(u)):
            step = np.zeros_like(u)
            step[i] = h
            fd[i] = (wave_source_potential(ops_small, u + step, spec)
                     - wave_source_potential(ops_small, u - step, spec)) / (2 * h)
        assert np.abs(fd - grad).max() <= 1e-5 * np.abs(grad).max()


@pytest.mark.parametrize("spec", [SourceSpec(b=1.0, q=3.0), SourceSpec(a=2.0, b=-1.0, q=2.0),
                                  SourceSpec(a=1.0, q=1.0)])
def test_plate_gradient_consistency(ops_small, spec):
    rng = np.random.default_rng(8)
    h = 1e-6
    for _ in range(20):
        w = rng.standard_normal(ops_small.n_plate)
        grad = project_plate_source(ops_small, w, spec)
        fd = np.empty_like(w)
        for i in range(len(w)):
            step = np.zeros_like(w)
            step[i] = h
            fd[i] = (plate_source_potential(ops_small, w + step, spec)
                     - plate_source_potential(ops_small, w - step, spec)) / (2 * h)
        assert np.abs(fd - grad).max() <= 1e-5 * np.abs(grad).max()


def test_coupling_power_cancels(ops2, rng):
    """With sources and damping off, the coupling contributes nothing to dE/dt."""
    ops = ops2.without_damping()
    spec = SourceSpec(rho_w=0.0)
    for _ in range(10):
        y = rng.standard_normal(32)
        dy = rhs_vector(ops, spec, y)
        u, du, w, dw = y[:8], y[8:16], y[16:24], y[24:]
        ddu, ddw = dy[8:16], dy[24:]
        terms = np.array([du @ ddu, (ops.wave_stiffness * u) @ du,
                          dw @ ops.plate_mass @ ddw, w @ ops.plate_bending @ dw])
        assert abs(terms.sum()) <= 1e-12 * np.abs(terms).sum()


class TestEvalFields:
    def test_zero_state(self, ops2):
        vals = eval_fields(ops2, ModalState.zeros(ops2), np.array([[0.3, 0.4]]))
        assert all(not np.any(v) for v in vals)

    def test_first_mode_at_gamma_midpoint(self, ops2):
        state = ModalState.zeros(ops2)
        state.u[0] = 1.0
        u, _, _, _ = eval_fields(ops2, state, np.array([[0.5, 1.0]]))
        assert u[0] == pytest.approx(2.0)

    def test_linearity(self, ops2, rng):
        y = rng.standard_normal(32)
        s = ModalState.from_vector(0.0, y, 8, 8)
        s3 = ModalState.from_vector(0.0, 3.0 * y, 8, 8)
        pts = rng.uniform(size=(6, 2))
        for a, b in zip(eval_fields(ops2, s, pts), eval_fields(ops2, s3, pts)):
            np.testing.assert_allclose(b, 3.0 * a, rtol=1e-13, atol=1e-13)
