"""Time stepping of the Galerkin ODE system for the modal coefficients."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .assembly import GalerkinOperators, SourceSpec, project_plate_source, project_wave_source
from .geometry import eval_wave_mode

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e8
SCHEMES = ("rk4", "midpoint")


class ConvergenceError(RuntimeError):
    """The implicit midpoint fixed-point iteration failed to converge."""


@dataclass(frozen=True, eq=False)
class ModalState:
    t: float
    u: np.ndarray
    du: np.ndarray
    w: np.ndarray
    dw: np.ndarray

    @classmethod
    def zeros(cls, ops: GalerkinOperators, t: float = 0.0) -> "ModalState":
        nw, npl = ops.n_wave, ops.n_plate
        return cls(t, np.zeros(nw), np.zeros(nw), np.zeros(npl), np.zeros(npl))

    @classmethod
    def from_vector(cls, t, y, n_wave, n_plate) -> "ModalState":
        y = np.asarray(y, dtype=float)
        i1, i2, i3 = n_wave, 2 * n_wave, 2 * n_wave + n_plate
        return cls(float(t), y[:i1].copy(), y[i1:i2].copy(), y[i2:i3].copy(), y[i3:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.du, self.w, self.dw])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.to_vector()).all())

    def max_abs(self) -> float:
        return float(np.abs(self.to_vector()).max())

    def __eq__(self, other):
        if not isinstance(other, ModalState):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.to_vector(), other.to_vector())


def _split(ops, y):
    nw, npl = ops.n_wave, ops.n_plate
    return y[..., :nw], y[..., nw:2 * nw], y[..., 2 * nw:2 * nw + npl], y[..., 2 * nw + npl:]


def rhs_vector(ops: GalerkinOperators, spec: SourceSpec, y: np.ndarray) -> np.ndarray:
    """Time derivative of stacked state vector(s) [u, du, w, dw]."""
    u, du, w, dw = _split(ops, y)
    with np.errstate(over="ignore", invalid="ignore"):
        ddu = -ops.wave_stiffness * u + dw @ ops.coupling.T - project_wave_source(ops, u, spec)
        ddw = (-(w @ ops.accel_bending.T) - dw @ ops.accel_damping.T - du @ ops.accel_coupling.T
               + project_plate_source(ops, w, spec) @ ops.mass_inverse.T)
    return np.concatenate([du, ddu, dw, ddw], axis=-1)


def rhs(ops: GalerkinOperators, spec: SourceSpec, state: ModalState) -> ModalState:
    """(du, u'', dw, w'') with u'' = -L u + C dw - F(u) and M w'' = -K w - M dw - C^T du + G(w)."""
    dy = rhs_vector(ops, spec, state.to_vector())
    return ModalState.from_vector(state.t, dy, ops.n_wave, ops.n_plate)


def _rk4(ops, spec, y, dt):
    k1 = rhs_vector(ops, spec, y)
    k2 = rhs_vector(ops, spec, y + 0.5 * dt * k1)
    k3 = rhs_vector(ops, spec, y + 0.5 * dt * k2)
    k4 = rhs_vector(ops, spec, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _midpoint(ops, spec, y, dt, tol, max_iter):
    f0 = rhs_vector(ops, spec, y)
    y_new = y + dt * f0
    for it in range(1, max_iter + 1):
        nxt = y + dt * rhs_vector(ops, spec, 0.5 * (y + y_new))
        change = np.abs(nxt - y_new).max()
        y_new = nxt
        if not np.isfinite(change):
            break
        if change <= tol:
            return y_new, it
    raise ConvergenceError(
        f"implicit midpoint did not converge in {max_iter} iterations (dt={dt:g}); "
        f"dt * max_frequency = {dt * ops.max_frequency:.3g} should stay well below 2")


def step_rk4(ops: GalerkinOperators, spec: SourceSpec, state: ModalState, dt: float) -> ModalState:
    if dt == 0:
        raise ValueError("dt must be nonzero")
    y = _rk4(ops, spec, state.to_vector(), dt)
    return ModalState.from_vector(state.t + dt, y, ops.n_wave, ops.n_plate)


def step_implicit_midpoint(ops, spec, state, dt, tol=1e-12, max_iter=100, *, return_iterations=False):
    """One implicit midpoint step solved by fixed-point iteration to ``tol`` in max-norm."""
    if dt <= 0 or tol <= 0:
        raise ValueError("dt and tol must be positive")
    y, iterations = _midpoint(ops, spec, state.to_vector(), dt, tol, max_iter)
    new = ModalState.from_vector(state.t + dt, y, ops.n_wave, ops.n_plate)
    return (new, iterations) if return_iterations else new


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    u: np.ndarray      # (n_samples, n_wave)
    du: np.ndarray
    w: np.ndarray      # (n_samples, n_plate)
    dw: np.ndarray
    dt: float
    stride: int
    scheme: str
    threshold: float = DEFAULT_THRESHOLD
    blowup: bool = False
    halt_time: float | None = None
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k) -> ModalState:
        return ModalState(float(self.times[k]), self.u[k], self.du[k], self.w[k], self.dw[k])

    @cached_property
    def samples(self) -> list[ModalState]:
        return [self[k] for k in range(len(self))]

    @property
    def vectors(self) -> np.ndarray:
        return np.concatenate([self.u, self.du, self.w, self.dw], axis=1)

    @property
    def final(self) -> ModalState:
        return self[len(self) - 1]

    @property
    def n_wave(self) -> int:
        return self.u.shape[1]

    @property
    def n_plate(self) -> int:
        return self.w.shape[1]

    @classmethod
    def from_vectors(cls, times, vectors, n_wave, n_plate, **kwargs) -> "Trajectory":
        vectors = np.asarray(vectors, dtype=float)
        i1, i2, i3 = n_wave, 2 * n_wave, 2 * n_wave + n_plate
        return cls(np.asarray(times, dtype=float), vectors[:, :i1], vectors[:, i1:i2],
                   vectors[:, i2:i3], vectors[:, i3:], **kwargs)


def integrate(ops: GalerkinOperators, spec: SourceSpec, initial: ModalState, T: float, dt: float,
              stride: int = 1, scheme: str = "rk4", threshold: float = DEFAULT_THRESHOLD,
              tol: float = 1e-12, max_iter: int = 100) -> Trajectory:
    """Advance from ``initial`` to time T, sampling every ``stride`` steps.

    Halts early, setting the blow-up flag, once any coefficient exceeds
    ``threshold`` in magnitude or stops being finite.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * T:
        log.warning("T=%g is not a multiple of dt=%g; integrating to %g", T, dt, n_steps * dt)

    y = initial.to_vector()
    t0 = initial.t
    times, rows, iters = [t0], [y.copy()], []
    blowup, halt = False, None
    for n in range(1, n_steps + 1):
        if scheme == "rk4":
            y = _rk4(ops, spec, y, dt)
        else:
            try:
                y, it = _midpoint(ops, spec, y, dt, tol, max_iter)
            except ConvergenceError:
                if np.abs(y).max() > threshold / 10:
                    # iteration breaks down on the way to blow-up
                    blowup, halt = True, t0 + n * dt
                    break
                raise
            iters.append(it)
        t = t0 + n * dt
        if not np.isfinite(y).all() or np.abs(y).max() > threshold:
            blowup, halt = True, t
            log.info("blow-up flag set at t=%.6g", t)
            break
        if n % stride == 0:
            times.append(t)
            rows.append(y.copy())
    return Trajectory.from_vectors(
        times, np.array(rows), ops.n_wave, ops.n_plate, dt=dt, stride=stride, scheme=scheme,
        threshold=threshold, blowup=blowup, halt_time=halt, iterations=np.array(iters, dtype=int))


def linear_system_matrix(ops: GalerkinOperators, spec: SourceSpec) -> np.ndarray:
    """Matrix A with y' = A y when both sources are linear."""
    if not spec.is_linear:
        raise ValueError("source spec is not linear")
    n = 2 * ops.n_wave + 2 * ops.n_plate
    return np.stack([rhs_vector(ops, spec, e) for e in np.eye(n)], axis=-1)


# --------------------------------------------------------------------------
# initial data

def project_initial_data(ops: GalerkinOperators, u0_fn=None, u1_fn=None, w0_fn=None,
                         w1_fn=None) -> ModalState:
    """L2 projections of the initial fields onto the truncated bases.

    Chamber functions take points of shape (n, dim); plate functions take
    face points of shape (n, dim - 1). ``None`` means the zero field.
    """
    def wave(fn):
        if fn is None:
            return np.zeros(ops.n_wave)
        vals = np.asarray(fn(ops.omega_nodes), dtype=float)
        return (vals * ops.omega_weights) @ ops.wave_at_nodes

    def plate(fn):
        if fn is None:
            return np.zeros(ops.n_plate)
        vals = np.asarray(fn(ops.gamma_nodes), dtype=float)
        load = (vals * ops.gamma_weights) @ ops.plate_at_nodes
        return np.linalg.solve(ops.plate_mass, load)

    return ModalState(0.0, wave(u0_fn), wave(u1_fn), plate(w0_fn), plate(w1_fn))


def wave_mode_function(ops: GalerkinOperators, j: int, scale: float = 1.0):
    mode = ops.wave_basis[j]
    return lambda x: scale * eval_wave_mode(mode, x)
