"""Finite-dimensional operators and nonlinear projections of the Galerkin system."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .geometry import (
    Domain,
    PlateBasis,
    Quadrature,
    WaveMode,
    build_plate_basis,
    default_order,
    eval_wave_mode,
    trace_wave_mode,
    wave_mode_gradient,
    wave_modes,
    ConfigurationError,
    GRAM_TOLERANCE,
)


def signed_power(x, exponent):
    """|x|^(exponent-1) x, with the convention that exponent 1 gives x."""
    with np.errstate(over="ignore", invalid="ignore"):
        return np.sign(x) * np.abs(x) ** exponent


@dataclass(frozen=True)
class SourceSpec:
    """Wave source rho_w |u|^(p-1) u and plate source h(w) = a w + b |w|^(q-1) w."""

    p: float = 1.0
    rho_w: float = 1.0
    a: float = 0.0
    b: float = 0.0
    q: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("exponents p and q must be >= 1")

    def wave_force(self, u):
        return self.rho_w * signed_power(u, self.p)

    def wave_potential(self, u):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.rho_w * np.abs(u) ** (self.p + 1) / (self.p + 1)

    def wave_force_derivative(self, u):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.rho_w * self.p * np.abs(u) ** (self.p - 1)

    def h(self, w):
        return self.a * w + self.b * signed_power(w, self.q)

    def H(self, w):
        """Primitive of h with H(0) = 0."""
        with np.errstate(over="ignore", invalid="ignore"):
            return 0.5 * self.a * w * w + self.b * np.abs(w) ** (self.q + 1) / (self.q + 1)

    def h_prime(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.a + self.b * self.q * np.abs(w) ** (self.q - 1)

    @property
    def growth_constant(self) -> float:
        """A constant C with |h'(w)| <= C (|w|^(q-1) + 1) for this family."""
        return max(abs(self.a), abs(self.b)) * (1.0 + self.q)

    @property
    def is_linear(self) -> bool:
        wave_linear = self.rho_w == 0 or self.p == 1
        plate_linear = self.b == 0 or self.q == 1
        return wave_linear and plate_linear


@dataclass(frozen=True, eq=False)
class GalerkinOperators:
    domain: Domain
    quad: Quadrature
    wave_basis: tuple
    plate_basis: PlateBasis
    wave_stiffness: np.ndarray   # diag(lambda_j) stored as a vector
    plate_mass: np.ndarray
    plate_bending: np.ndarray
    plate_damping: np.ndarray
    coupling: np.ndarray         # C[j, n] = (sigma_n, gamma e_j)_Gamma
    omega_nodes: np.ndarray
    omega_weights: np.ndarray
    wave_at_nodes: np.ndarray    # (n_omega_nodes, n_wave)
    gamma_nodes: np.ndarray
    gamma_weights: np.ndarray
    plate_at_nodes: np.ndarray   # (n_gamma_nodes, n_plate)
    trace_at_nodes: np.ndarray   # (n_gamma_nodes, n_wave)

    @property
    def n_wave(self) -> int:
        return len(self.wave_basis)

    @property
    def n_plate(self) -> int:
        return len(self.plate_basis)

    @cached_property
    def mass_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.plate_mass)

    @cached_property
    def accel_bending(self) -> np.ndarray:
        return self.mass_inverse @ self.plate_bending

    @cached_property
    def accel_damping(self) -> np.ndarray:
        return self.mass_inverse @ self.plate_damping

    @cached_property
    def accel_coupling(self) -> np.ndarray:
        return self.mass_inverse @ self.coupling.T

    @cached_property
    def max_frequency(self) -> float:
        """Largest undamped natural frequency of the uncoupled linear parts."""
        plate = np.linalg.eigvals(self.accel_bending).real.max()
        return float(np.sqrt(max(self.wave_stiffness.max(), plate)))

    def without_coupling(self) -> "GalerkinOperators":
        return replace(self, coupling=np.zeros_like(self.coupling))

    def without_damping(self) -> "GalerkinOperators":
        return replace(self, plate_damping=np.zeros_like(self.plate_damping))

    def scaled(self, coupling: float = 1.0, damping: float = 1.0) -> "GalerkinOperators":
        if coupling == 1.0 and damping == 1.0:
            return self
        return replace(self, coupling=coupling * self.coupling,
                       plate_damping=damping * self.plate_damping)


def assemble(domain: Domain, n_wave: int, n_plate: int, quad: Quadrature | None = None,
             spec: SourceSpec | None = None) -> GalerkinOperators:
    if n_wave < 1 or n_plate < 1:
        raise ValueError("truncation sizes must be >= 1")
    modes = wave_modes(domain, n_wave)
    if quad is None:
        max_index = max(max(max(m.index) for m in modes), n_plate)
        if domain.dim == 3:
            max_index = max(max_index, int(np.ceil(np.sqrt(n_plate))) + 1)
        p, q = (spec.p, spec.q) if spec is not None else (1.0, 1.0)
        quad = Quadrature(default_order(max_index, p, q))
    plate = build_plate_basis(domain, n_plate, quad)

    onodes, oweights = quad.omega(domain)
    wave_vals = np.stack([eval_wave_mode(m, onodes) for m in modes], axis=-1)
    gram = (wave_vals * oweights[:, None]).T @ wave_vals
    deviation = np.abs(gram - np.eye(n_wave)).max()
    if deviation > GRAM_TOLERANCE:
        raise ConfigurationError(
            f"wave L2 Gram deviates from identity by {deviation:.2e}; "
            f"quadrature order {quad.order} too low")

    gnodes, gweights = quad.gamma(domain)
    plate_vals = plate.values(gnodes)
    traces = np.stack([trace_wave_mode(m)(gnodes) for m in modes], axis=-1)
    coupling = (traces * gweights[:, None]).T @ plate_vals

    return GalerkinOperators(
        domain=domain,
        quad=quad,
        wave_basis=tuple(modes),
        plate_basis=plate,
        wave_stiffness=np.array([m.eigenvalue for m in modes]),
        plate_mass=plate.l2_gram,
        plate_bending=plate.bending_gram,
        plate_damping=plate.l2_gram.copy(),
        coupling=coupling,
        omega_nodes=onodes,
        omega_weights=oweights,
        wave_at_nodes=wave_vals,
        gamma_nodes=gnodes,
        gamma_weights=gweights,
        plate_at_nodes=plate_vals,
        trace_at_nodes=traces,
    )


def wave_gram(ops: GalerkinOperators) -> np.ndarray:
    e = ops.wave_at_nodes
    return (e * ops.omega_weights[:, None]).T @ e


def wave_gradient_gram(ops: GalerkinOperators) -> np.ndarray:
    grads = np.stack([wave_mode_gradient(m, ops.omega_nodes) for m in ops.wave_basis], axis=-1)
    weighted = grads * ops.omega_weights[:, None, None]
    return np.einsum("xdi,xdj->ij", weighted, grads)


def project_wave_source(ops: GalerkinOperators, u_coeffs, spec: SourceSpec) -> np.ndarray:
    """F_j = rho_w * sum_nodes weight |u|^(p-1) u e_j. Accepts stacked coefficient rows."""
    u_coeffs = np.asarray(u_coeffs, dtype=float)
    if spec.rho_w == 0:
        return np.zeros_like(u_coeffs)
    u_nodes = u_coeffs @ ops.wave_at_nodes.T
    if spec.p == 1:
        f = spec.rho_w * u_nodes
    else:
        f = spec.wave_force(u_nodes)
    with np.errstate(over="ignore", invalid="ignore"):
        return (f * ops.omega_weights) @ ops.wave_at_nodes


def project_plate_source(ops: GalerkinOperators, w_coeffs, spec: SourceSpec) -> np.ndarray:
    """G_j = sum_nodes weight h(w) sigma_j over the elastic face."""
    w_coeffs = np.asarray(w_coeffs, dtype=float)
    if spec.a == 0 and spec.b == 0:
        return np.zeros_like(w_coeffs)
    w_nodes = w_coeffs @ ops.plate_at_nodes.T
    return (spec.h(w_nodes) * ops.gamma_weights) @ ops.plate_at_nodes


def wave_source_potential(ops: GalerkinOperators, u_coeffs, spec: SourceSpec):
    """Quadrature value of rho_w * int |u|^(p+1)/(p+1) dx."""
    u_coeffs = np.asarray(u_coeffs, dtype=float)
    if spec.rho_w == 0:
        return np.zeros(u_coeffs.shape[:-1]) if u_coeffs.ndim > 1 else 0.0
    u_nodes = u_coeffs @ ops.wave_at_nodes.T
    return spec.wave_potential(u_nodes) @ ops.omega_weights


def plate_source_potential(ops: GalerkinOperators, w_coeffs, spec: SourceSpec):
    """Quadrature value of int_Gamma H(w)."""
    w_coeffs = np.asarray(w_coeffs, dtype=float)
    w_nodes = w_coeffs @ ops.plate_at_nodes.T
    return spec.H(w_nodes) @ ops.gamma_weights


def eval_fields(ops: GalerkinOperators, state, points, face_points=None):
    """Pointwise modal sums (u, u_t, w, w_t).

    ``points`` lie in the chamber; plate fields are evaluated at ``face_points``,
    which default to the footprint of ``points`` on the elastic face.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if face_points is None:
        face_points = points[:, :-1]
    e = np.stack([eval_wave_mode(m, points) for m in ops.wave_basis], axis=-1)
    s = ops.plate_basis.values(face_points)
    return e @ state.u, e @ state.du, s @ state.w, s @ state.dw
