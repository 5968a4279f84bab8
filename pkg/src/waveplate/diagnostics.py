"""Energies, energy identity residuals, a priori bounds and perturbation metrics.

Time integrals over a trajectory are taken on its sample grid. The default
rule ("hermite") interpolates the state between samples with cubic Hermite
polynomials, using the ODE right-hand side for the sample derivatives, and
integrates with 4-point Gauss-Legendre per sample interval; its error is
O(spacing^4). The "trapezoid" rule uses sample values only and is O(spacing^2).
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from numpy.polynomial.legendre import leggauss

from .assembly import (
    GalerkinOperators,
    SourceSpec,
    plate_source_potential,
    project_plate_source,
    project_wave_source,
    wave_source_potential,
)
from .integrator import ModalState, Trajectory, rhs_vector

RULES = ("hermite", "trapezoid")
_CHUNK = 2048

ENERGY_COLUMNS = ("t", "Ek_wave", "Ep_wave", "Ek_plate", "Ep_bend", "Ep_source", "E_script",
                  "H_int", "E_total", "damp_cum", "work_cum", "residual")


@dataclass
class EnergyReport:
    t: float | np.ndarray
    kinetic_wave: float | np.ndarray
    potential_wave: float | np.ndarray
    kinetic_plate: float | np.ndarray
    bending: float | np.ndarray
    source_potential: float | np.ndarray
    script_energy: float | np.ndarray     # positive energy (kinetic + elastic + wave source)
    plate_potential: float | np.ndarray   # int_Gamma H(w)
    total: float | np.ndarray             # script_energy - plate_potential
    damping: float | np.ndarray = 0.0     # cumulative int |w_t|^2
    work: float | np.ndarray = 0.0        # cumulative int int h(w) w_t
    residual: float | np.ndarray = 0.0

    def columns(self) -> dict:
        values = [getattr(self, f.name) for f in fields(self)]
        return dict(zip(ENERGY_COLUMNS, values))

    def rows(self):
        cols = [np.atleast_1d(v) for v in self.columns().values()]
        n = max(len(c) for c in cols)
        cols = [np.broadcast_to(c, (n,)) for c in cols]
        return np.stack(cols, axis=-1)


def _chunked(fn, rows):
    rows = np.asarray(rows)
    if len(rows) <= _CHUNK:
        return fn(rows)
    return np.concatenate([fn(rows[i:i + _CHUNK]) for i in range(0, len(rows), _CHUNK)])


def _energy_parts(ops: GalerkinOperators, spec: SourceSpec, u, du, w, dw):
    kin_w = 0.5 * np.sum(du * du, axis=-1)
    pot_w = 0.5 * np.sum(ops.wave_stiffness * u * u, axis=-1)
    kin_p = 0.5 * np.einsum("...i,ij,...j->...", dw, ops.plate_mass, dw)
    bend = 0.5 * np.einsum("...i,ij,...j->...", w, ops.plate_bending, w)
    src = _chunked(lambda r: np.atleast_1d(wave_source_potential(ops, r, spec)), np.atleast_2d(u))
    hint = _chunked(lambda r: np.atleast_1d(plate_source_potential(ops, r, spec)), np.atleast_2d(w))
    if np.ndim(u) == 1:
        src, hint = float(src[0]), float(hint[0])
    return kin_w, pot_w, kin_p, bend, src, hint


def energy(ops: GalerkinOperators, spec: SourceSpec, state: ModalState) -> EnergyReport:
    """Instantaneous energies of a single state."""
    kin_w, pot_w, kin_p, bend, src, hint = _energy_parts(
        ops, spec, state.u, state.du, state.w, state.dw)
    script = kin_w + pot_w + kin_p + bend + src
    return EnergyReport(state.t, float(kin_w), float(pot_w), float(kin_p), float(bend),
                        float(src), float(script), float(hint), float(script - hint))


def script_energy(ops, spec, traj: Trajectory) -> np.ndarray:
    kin_w, pot_w, kin_p, bend, src, _ = _energy_parts(ops, spec, traj.u, traj.du, traj.w, traj.dw)
    return kin_w + pot_w + kin_p + bend + src


# --------------------------------------------------------------------------
# time quadrature on the sample grid

def sample_derivatives(traj: Trajectory, ops: GalerkinOperators, spec: SourceSpec) -> np.ndarray:
    return _chunked(lambda r: rhs_vector(ops, spec, r), traj.vectors)


def _gauss_states(traj, ops, spec, n_gauss=4):
    """Hermite-interpolated state vectors at Gauss points of every sample interval."""
    y = traj.vectors
    dy = sample_derivatives(traj, ops, spec)
    h = np.diff(traj.times)[:, None, None]
    x, wg = leggauss(n_gauss)
    s = 0.5 * (x + 1.0)
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    shape = lambda c: c[None, :, None]
    states = (shape(h00) * y[:-1, None, :] + shape(h10) * h * dy[:-1, None, :]
              + shape(h01) * y[1:, None, :] + shape(h11) * h * dy[1:, None, :])
    weights = 0.5 * wg[None, :] * h[:, :, 0]
    return states, weights


def cumulative_integral(traj, ops, spec, integrand, rule="hermite") -> np.ndarray:
    """Running integral from the first sample of ``integrand(state_vectors)`` at every sample.

    ``integrand`` maps stacked state vectors (m, n_state) to (m,) or (m, k).
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    if len(traj) < 2:
        raise ValueError("need at least two samples")
    if rule == "trapezoid":
        vals = _chunked(integrand, traj.vectors)
        h = np.diff(traj.times).reshape((-1,) + (1,) * (vals.ndim - 1))
        steps = 0.5 * h * (vals[1:] + vals[:-1])
    else:
        states, weights = _gauss_states(traj, ops, spec)
        m, g, n = states.shape
        vals = _chunked(integrand, states.reshape(m * g, n))
        vals = vals.reshape((m, g) + vals.shape[1:])
        weights = weights.reshape(weights.shape + (1,) * (vals.ndim - 2))
        steps = np.sum(weights * vals, axis=1)
    zero = np.zeros((1,) + steps.shape[1:])
    return np.concatenate([zero, np.cumsum(steps, axis=0)])


def _split(ops, y):
    nw, npl = ops.n_wave, ops.n_plate
    return y[..., :nw], y[..., nw:2 * nw], y[..., 2 * nw:2 * nw + npl], y[..., 2 * nw + npl:]


def damping_integrand(ops):
    def f(y):
        dw = _split(ops, y)[3]
        return np.einsum("...i,ij,...j->...", dw, ops.plate_damping, dw)
    return f


def work_integrand(ops, spec):
    def f(y):
        _, _, w, dw = _split(ops, y)
        return np.sum(project_plate_source(ops, w, spec) * dw, axis=-1)
    return f


def energy_report(traj: Trajectory, ops, spec, rule="hermite") -> EnergyReport:
    """Energy series with cumulative damping/work ledgers and identity residual."""
    kin_w, pot_w, kin_p, bend, src, hint = _energy_parts(
        ops, spec, traj.u, traj.du, traj.w, traj.dw)
    script = kin_w + pot_w + kin_p + bend + src
    if len(traj) >= 2:
        damp = cumulative_integral(traj, ops, spec, damping_integrand(ops), rule)
        work = cumulative_integral(traj, ops, spec, work_integrand(ops, spec), rule)
    else:
        damp = work = np.zeros(len(traj))
    residual = script + damp - script[0] - work
    return EnergyReport(traj.times.copy(), kin_w, pot_w, kin_p, bend, src, script, hint,
                        script - hint, damp, work, residual)


def identity_residual(traj: Trajectory, ops, spec, rule="hermite") -> np.ndarray:
    """R(t) = E(t) + int |w_t|^2 - E(0) - int int h(w) w_t at every sample."""
    return energy_report(traj, ops, spec, rule).residual


def energy_inequality_check(residual, e0, tol=1e-6):
    """One-sided check R(t) <= tol * E(0); returns (passed, indices of violating samples)."""
    residual = np.asarray(residual)
    bad = np.flatnonzero(residual > tol * max(e0, np.finfo(float).tiny))
    return bad.size == 0, bad


# --------------------------------------------------------------------------
# a priori bounds

def gronwall_bound(E0, C, t):
    """(E0 + C t) exp(C t)."""
    t = np.asarray(t, dtype=float)
    out = (E0 + C * t) * np.exp(C * t)
    return float(out) if out.ndim == 0 else out


def _trapz_cumulative(times, values):
    steps = 0.5 * np.diff(times) * (values[1:] + values[:-1])
    return np.concatenate([[0.0], np.cumsum(steps)])


def fit_gronwall_constant(times, energies) -> float:
    """Smallest C >= 0 with E(t) <= E(0) + C t + C int_0^t E on the samples."""
    times, energies = np.asarray(times, float), np.asarray(energies, float)
    denom = times - times[0] + _trapz_cumulative(times, energies)
    excess = energies - energies[0]
    mask = denom > 0
    if not mask.any():
        return 0.0
    return float(max(0.0, np.max(excess[mask] / denom[mask])))


def gronwall_check(times, energies, C, slack=1e-12) -> bool:
    times, energies = np.asarray(times, float), np.asarray(energies, float)
    bound = gronwall_bound(energies[0], C, times - times[0])
    return bool(np.all(energies <= bound * (1 + slack) + slack))


def majorant_blowup_time(C, C1, q) -> float:
    if q <= 1:
        raise ValueError("majorant blow-up needs q > 1")
    if C1 <= 0:
        return np.inf
    return C ** (1 - q) / (C1 * (q - 1))


def volterra_majorant(C, C1, q, t):
    """Solution z(t) = (C^(1-q) - C1 (q-1) t)^(-1/(q-1)) of z = C + C1 int z^q; inf past blow-up."""
    if q <= 1:
        raise ValueError("use gronwall_bound for q = 1")
    t = np.asarray(t, dtype=float)
    base = C ** (1 - q) - C1 * (q - 1) * t
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(base > 0, np.abs(base) ** (-1.0 / (q - 1)), np.inf)
    return float(out) if out.ndim == 0 else out


def fit_volterra_constants(times, energies, q):
    """(C, C1) for y = 1 + E: C = y(0) and the smallest C1 >= 0 with y <= C + C1 int y^q."""
    times = np.asarray(times, float)
    y = 1.0 + np.asarray(energies, float)
    C = float(y[0])
    integral = _trapz_cumulative(times, y ** q)
    mask = integral > 0
    if not mask.any():
        return C, 0.0
    return C, float(max(0.0, np.max((y[mask] - C) / integral[mask])))


def majorant_domination(times, energies, q, C, C1, fraction=0.9, slack=1e-12):
    """Check 1 + E(t) <= z(t) for samples with t <= fraction * blow-up time of z.

    Returns (passed, number of samples checked).
    """
    times = np.asarray(times, float) - times[0]
    y = 1.0 + np.asarray(energies, float)
    horizon = fraction * majorant_blowup_time(C, C1, q)
    mask = times <= horizon
    z = volterra_majorant(C, C1, q, times[mask])
    return bool(np.all(y[mask] <= z * (1 + slack))), int(mask.sum())


def blowup_time_estimate(E0, C, T, q):
    """Blow-up time T1 of the energy majorant and the safe horizon min(T, T1/2)."""
    if q <= 1 or C <= 0:
        raise ValueError("need q > 1 and C > 0")
    t1 = (E0 + C * T) ** (1 - q) / (C * (q - 1))
    return t1, min(T, 0.5 * t1)


# --------------------------------------------------------------------------
# weak formulation

def _check_nested(ops, eval_ops):
    nested = (eval_ops.n_wave >= ops.n_wave and eval_ops.n_plate >= ops.n_plate
              and eval_ops.wave_basis[:ops.n_wave] == ops.wave_basis
              and [tuple(m.index for m in pair) for pair in eval_ops.plate_basis.modes[:ops.n_plate]]
              == [tuple(m.index for m in pair) for pair in ops.plate_basis.modes])
    if not nested or eval_ops.domain != ops.domain:
        raise ValueError("evaluation basis must extend the simulation basis")


def weak_form_residuals(traj: Trajectory, ops, spec, which: str = "wave", eval_ops=None,
                        rule="hermite") -> np.ndarray:
    """Residuals of the variational identity at the final sample for every basis test function.

    Test functions are the modes of ``eval_ops`` (a nested, finer basis with
    matching coupling/damping scales) or of ``ops`` itself. Each residual is
    divided by the L2 norm of its test function.
    """
    ev = ops if eval_ops is None else eval_ops
    if eval_ops is not None:
        _check_nested(ops, eval_ops)
    nw, npl = ops.n_wave, ops.n_plate
    first, last = traj[0], traj.final

    lin = cumulative_integral(traj, ops, spec, lambda y: y, rule)[-1]
    int_u, int_du, int_w, int_dw = _split(ops, lin)

    if which == "wave":
        sim_modes = ev.wave_at_nodes[:, :nw]
        tests = ev.wave_at_nodes * ev.omega_weights[:, None]

        def source(y):
            with np.errstate(over="ignore", invalid="ignore"):
                return spec.wave_force(y[..., :nw] @ sim_modes.T) @ tests

        res = -ev.coupling[:, :npl] @ int_dw
        res[:nw] += last.du - first.du + ev.wave_stiffness[:nw] * int_u
        if spec.rho_w:
            res += cumulative_integral(traj, ops, spec, source, rule)[-1]
        norm = np.sqrt(ev.omega_weights @ ev.wave_at_nodes ** 2)
    elif which == "plate":
        sim_modes = ev.plate_at_nodes[:, :npl]
        tests = ev.plate_at_nodes * ev.gamma_weights[:, None]

        def source(y):
            return spec.h(y[..., 2 * nw:2 * nw + npl] @ sim_modes.T) @ tests

        res = (ev.plate_mass[:, :npl] @ (last.dw - first.dw)
               + ev.coupling[:nw, :].T @ (last.u - first.u)
               + ev.plate_bending[:, :npl] @ int_w + ev.plate_damping[:, :npl] @ int_dw)
        if spec.a or spec.b:
            res -= cumulative_integral(traj, ops, spec, source, rule)[-1]
        norm = np.sqrt(np.diag(ev.plate_mass))
    else:
        raise ValueError("which must be 'wave' or 'plate'")
    return res / norm


def weak_form_residual(traj: Trajectory, ops, spec, test_index: int, which: str = "wave",
                       eval_ops=None, rule="hermite") -> float:
    """Residual for one basis test function; ``test_index`` is zero-based and may
    exceed the simulation truncation when ``eval_ops`` is supplied."""
    if which not in ("wave", "plate"):
        raise ValueError("which must be 'wave' or 'plate'")
    ev = ops if eval_ops is None else eval_ops
    size = ev.n_wave if which == "wave" else ev.n_plate
    if not 0 <= int(test_index) < size:
        raise IndexError(f"{which} test index out of range")
    return float(weak_form_residuals(traj, ops, spec, which, eval_ops, rule)[int(test_index)])


# --------------------------------------------------------------------------
# continuous dependence

def perturbation_energy(traj_a: Trajectory, traj_b: Trajectory, ops) -> np.ndarray:
    """Quadratic energy of the difference of two trajectories at every shared sample."""
    if len(traj_a) != len(traj_b) or not np.allclose(traj_a.times, traj_b.times, rtol=0,
                                                      atol=1e-12 * max(1.0, traj_a.times[-1])):
        raise ValueError("trajectories must share the same sampling grid")
    du = traj_a.du - traj_b.du
    u = traj_a.u - traj_b.u
    dw = traj_a.dw - traj_b.dw
    w = traj_a.w - traj_b.w
    return 0.5 * (np.sum(du * du, axis=1) + np.sum(ops.wave_stiffness * u * u, axis=1)
                  + np.einsum("ni,ij,nj->n", dw, ops.plate_mass, dw)
                  + np.einsum("ni,ij,nj->n", w, ops.plate_bending, w))


def fit_perturbation_rate(times, etilde) -> float:
    """Smallest C_R >= 0 with Etilde(t) <= Etilde(0) exp(C_R t) on the samples."""
    times = np.asarray(times, float) - times[0]
    etilde = np.asarray(etilde, float)
    if etilde[0] <= 0:
        return 0.0
    mask = times > 0
    rates = np.log(np.maximum(etilde[mask], np.finfo(float).tiny) / etilde[0]) / times[mask]
    return float(max(0.0, rates.max())) if rates.size else 0.0
