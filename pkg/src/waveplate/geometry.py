"""Unit-box geometry, Gauss-Legendre quadrature and closed-form modal bases.

The chamber is the box (0, 1)^dim. The elastic wall is the top face
``x_dim = 1``; the remaining faces form the rigid wall where the acoustic
field vanishes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss


class ConfigurationError(ValueError):
    """Raised when a basis/quadrature combination cannot meet its accuracy checks."""


GRAM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Domain:
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")

    @property
    def plate_dim(self) -> int:
        return self.dim - 1

    @property
    def normal(self) -> np.ndarray:
        """Outward unit normal on the elastic face."""
        n = np.zeros(self.dim)
        n[-1] = 1.0
        return n

    def on_gamma(self, points, atol=1e-14) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.abs(points[:, -1] - 1.0) <= atol

    def on_gamma0(self, points, atol=1e-14) -> np.ndarray:
        points = np.atleast_2d(points)
        near = (np.abs(points) <= atol) | (np.abs(points - 1.0) <= atol)
        return near[:, :-1].any(axis=1) | near[:, -1] & (np.abs(points[:, -1]) <= atol)


@dataclass(frozen=True)
class Quadrature:
    """Tensor Gauss-Legendre rule on (0, 1) per axis."""

    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("quadrature order must be positive")

    @cached_property
    def _rule(self):
        x, w = leggauss(self.order)
        return 0.5 * (x + 1.0), 0.5 * w

    @property
    def nodes_1d(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights_1d(self) -> np.ndarray:
        return self._rule[1]

    def tensor(self, ndim: int):
        """Nodes of shape (order**ndim, ndim) and matching weights."""
        x, w = self._rule
        grids = np.meshgrid(*([x] * ndim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*([w] * ndim), indexing="ij")
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        return nodes, weights

    def omega(self, domain: Domain):
        return self.tensor(domain.dim)

    def gamma(self, domain: Domain):
        """Nodes on the elastic face, given by their first dim-1 coordinates."""
        return self.tensor(domain.plate_dim)


def default_order(max_index: int, p: float = 1.0, q: float = 1.0) -> int:
    order = 2 * int(max_index) + 8
    if p > 3 or q > 3:
        order *= 2
    return order


# --------------------------------------------------------------------------
# acoustic chamber modes

@dataclass(frozen=True)
class WaveMode:
    """Separable mode sin(k_1 pi x_1)...sin((m - 1/2) pi x_dim), L2-normalized."""

    index: tuple

    def __post_init__(self):
        if len(self.index) not in (2, 3) or min(self.index) < 1:
            raise ValueError(f"bad wave mode index {self.index}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def wavenumbers(self) -> np.ndarray:
        k = np.array(self.index, dtype=float)
        k[-1] -= 0.5
        return np.pi * k

    @property
    def eigenvalue(self) -> float:
        return float(np.sum(self.wavenumbers ** 2))

    @property
    def amplitude(self) -> float:
        return 2.0 ** (self.dim / 2)


def wave_modes(domain: Domain, count: int) -> list[WaveMode]:
    """The ``count`` lowest chamber modes, ordered by eigenvalue then index."""
    if count < 1:
        raise ValueError("count must be >= 1")
    bound = 1
    while True:
        idx = itertools.product(range(1, bound + 1), repeat=domain.dim)
        modes = sorted((WaveMode(i) for i in idx), key=lambda m: (m.eigenvalue, m.index))
        # every mode below the cutoff is enumerated once a full shell is present
        cutoff = np.pi ** 2 * (bound + 0.5) ** 2
        complete = [m for m in modes if m.eigenvalue < cutoff]
        if len(complete) >= count:
            return complete[:count]
        bound += 1


def eval_wave_mode(mode: WaveMode, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    scalar = points.ndim == 1
    points = np.atleast_2d(points)
    vals = mode.amplitude * np.prod(np.sin(points * mode.wavenumbers), axis=-1)
    return vals[0] if scalar else vals


def wave_mode_gradient(mode: WaveMode, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    kx = points * mode.wavenumbers
    s, c = np.sin(kx), np.cos(kx)
    grad = np.empty_like(points)
    for i in range(mode.dim):
        factors = s.copy()
        factors[:, i] = c[:, i] * mode.wavenumbers[i]
        grad[:, i] = np.prod(factors, axis=-1)
    return mode.amplitude * grad


def trace_wave_mode(mode: WaveMode):
    """Restriction of the mode to the elastic face, as a function of the face coordinates."""
    sign = float((-1) ** (mode.index[-1] + 1))
    k = mode.wavenumbers[:-1]
    amp = mode.amplitude * sign

    def trace(face_points):
        face_points = np.asarray(face_points, dtype=float)
        scalar = face_points.ndim == 0 or (face_points.ndim == 1 and len(k) > 1)
        pts = face_points.reshape(-1, len(k))
        vals = amp * np.prod(np.sin(pts * k), axis=-1)
        return vals[0] if scalar else vals

    return trace


# --------------------------------------------------------------------------
# clamped beam modes

def beam_residual(beta):
    """cos(b) - sech(b): the frequency equation cos(b)cosh(b) = 1 divided by cosh(b)."""
    beta = np.asarray(beta, dtype=float)
    return np.cos(beta) - 1.0 / np.cosh(beta)


def solve_beam_roots(count: int, max_iter: int = 200) -> np.ndarray:
    """Positive roots of cos(b)cosh(b) = 1, bracketed in ((n+1/4)pi, (n+3/4)pi)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    roots = np.empty(count)
    for n in range(1, count + 1):
        lo, hi = (n + 0.25) * np.pi, (n + 0.75) * np.pi
        f_lo = beam_residual(lo)
        if f_lo * beam_residual(hi) > 0:
            raise RuntimeError(f"beam root {n} not bracketed")
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            f_mid = beam_residual(mid)
            if (f_mid > 0) == (f_lo > 0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
            if hi - lo < 1e-8:
                break
        else:
            raise RuntimeError(f"bisection for beam root {n} did not converge")
        beta = 0.5 * (lo + hi)
        for _ in range(max_iter):
            slope = -np.sin(beta) + np.tanh(beta) / np.cosh(beta)
            step = beam_residual(beta) / slope
            beta -= step
            if abs(step) <= 4 * np.finfo(float).eps * beta:
                break
        else:
            raise RuntimeError(f"Newton polish for beam root {n} did not converge")
        if not (n + 0.25) * np.pi < beta < (n + 0.75) * np.pi:
            raise RuntimeError(f"beam root {n} left its bracket")
        roots[n - 1] = beta
    return roots


def _raw_beam(beta: float, x, derivative: int = 0):
    # cosh - alpha sinh and sinh - alpha cosh rewritten with decaying exponentials
    s = np.exp(-beta)
    denom = 1.0 - s * s - 2.0 * s * np.sin(beta)
    grow_coef = 2.0 * (np.cos(beta) - np.sin(beta) - s) / denom
    alpha = 1.0 - grow_coef * s
    grow = grow_coef * np.exp(beta * (x - 1.0))
    decay = (1.0 + alpha) * np.exp(-beta * x)
    a_part = 0.5 * (grow + decay)
    b_part = 0.5 * (grow - decay)
    c, sn = np.cos(beta * x), np.sin(beta * x)
    if derivative == 0:
        return a_part - c + alpha * sn
    if derivative == 1:
        return beta * (b_part + sn + alpha * c)
    if derivative == 2:
        return beta ** 2 * (a_part + c - alpha * sn)
    if derivative == 3:
        return beta ** 3 * (b_part - sn - alpha * c)
    raise ValueError("derivative must be 0..3")


@dataclass(frozen=True)
class BeamMode:
    """Clamped-clamped eigenfunction of d^4/dx^4 on (0, 1), L2-normalized."""

    index: int
    beta: float
    norm_const: float = field(default=1.0)

    @property
    def eigenvalue(self) -> float:
        return self.beta ** 4

    def __call__(self, x, derivative: int = 0):
        x = np.asarray(x, dtype=float)
        return _raw_beam(self.beta, x, derivative) / self.norm_const


def beam_modes(count: int, norm_order: int = 400) -> list[BeamMode]:
    betas = solve_beam_roots(count)
    x, w = Quadrature(norm_order).tensor(1)
    x = x[:, 0]
    modes = []
    for n, beta in enumerate(betas, start=1):
        norm = float(np.sqrt(w @ _raw_beam(beta, x) ** 2))
        modes.append(BeamMode(n, float(beta), norm))
    return modes


# --------------------------------------------------------------------------
# plate basis

@dataclass(frozen=True, eq=False)
class PlateBasis:
    """Beam modes (dim 2) or tensor products of beam modes (dim 3) on the elastic face."""

    domain: Domain
    modes: tuple
    l2_gram: np.ndarray
    bending_gram: np.ndarray

    def __len__(self):
        return len(self.modes)

    @property
    def max_index(self) -> int:
        return max(max(m.index for m in pair) for pair in self.modes)

    def values(self, face_points) -> np.ndarray:
        """Mode values, shape (n_points, n_modes)."""
        return _plate_eval(self.modes, face_points, "value")

    def laplacians(self, face_points) -> np.ndarray:
        return _plate_eval(self.modes, face_points, "laplacian")


def _plate_eval(modes, face_points, what):
    pts = np.asarray(face_points, dtype=float)
    pts = pts.reshape(-1, len(modes[0]))
    cols = []
    for pair in modes:
        if what == "value":
            col = np.ones(len(pts))
            for axis, beam in enumerate(pair):
                col = col * beam(pts[:, axis])
        else:
            col = np.zeros(len(pts))
            for axis in range(len(pair)):
                term = np.ones(len(pts))
                for other, beam in enumerate(pair):
                    term = term * beam(pts[:, other], 2 if other == axis else 0)
                col = col + term
        cols.append(col)
    return np.stack(cols, axis=-1)


def plate_mode_pairs(domain: Domain, n_modes: int) -> list[tuple]:
    """Index tuples for the plate basis, lowest (approximate) bending energy first."""
    if domain.plate_dim == 1:
        return [(n,) for n in range(1, n_modes + 1)]
    side = int(np.ceil(np.sqrt(n_modes))) + 1
    betas = solve_beam_roots(side)
    pairs = itertools.product(range(1, side + 1), repeat=2)
    key = lambda ab: (betas[ab[0] - 1] ** 4 + betas[ab[1] - 1] ** 4, ab)
    return sorted(pairs, key=key)[:n_modes]


def build_plate_basis(domain: Domain, n_modes: int, quad: Quadrature) -> PlateBasis:
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    pairs = plate_mode_pairs(domain, n_modes)
    beams = beam_modes(max(max(p) for p in pairs))
    modes = tuple(tuple(beams[i - 1] for i in pair) for pair in pairs)
    nodes, weights = quad.gamma(domain)
    vals = _plate_eval(modes, nodes, "value")
    laps = _plate_eval(modes, nodes, "laplacian")
    l2 = (vals * weights[:, None]).T @ vals
    bend = (laps * weights[:, None]).T @ laps
    l2 = 0.5 * (l2 + l2.T)
    bend = 0.5 * (bend + bend.T)
    deviation = np.abs(l2 - np.eye(n_modes)).max()
    if deviation > GRAM_TOLERANCE:
        raise ConfigurationError(
            f"plate L2 Gram deviates from identity by {deviation:.2e}; "
            f"quadrature order {quad.order} is too low for {n_modes} plate modes")
    if domain.plate_dim == 1:
        mu = np.array([m[0].eigenvalue for m in modes])
        scaled = np.abs(bend / np.sqrt(np.outer(mu, mu)) - np.eye(n_modes)).max()
        if scaled > GRAM_TOLERANCE:
            raise ConfigurationError(
                f"bending Gram deviates from diag(mu) by {scaled:.2e} (relative); "
                f"raise the quadrature order")
    return PlateBasis(domain, modes, l2, bend)
