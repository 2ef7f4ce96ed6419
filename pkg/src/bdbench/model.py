"""Potential energy landscapes, their forces, and periodic geometry.

Three systems are supported: a quadratic well (drift -alpha*x), the cosine
potential on the circle [0, 2*pi), and a periodic box of Lennard-Jones
particles with V = sum_{i<j} r_ij^-12 - r_ij^-6 under the minimum-image
convention.  Forces are the exact negative gradients; all functions here are
pure and safe to call from any number of workers.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularConfigurationError

TWO_PI = 2.0 * math.pi

# Pair distances below this are treated as a singular configuration rather
# than letting r^-12 overflow into meaningless values.
LJ_SINGULAR_DISTANCE = 1e-8


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class Unbounded:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")


@dataclass(frozen=True)
class PeriodicInterval:
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def dim(self) -> int:
        return 1


@dataclass(frozen=True)
class PeriodicBox:
    particles: int
    box_length: float

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("particle count must be positive")
        if not self.box_length > 0:
            raise ValueError("box length must be positive")

    @property
    def dim(self) -> int:
        return 3 * self.particles


Domain = Unbounded | PeriodicInterval | PeriodicBox


def wrap(domain: Domain, x: np.ndarray) -> np.ndarray:
    """Map periodic coordinates into [0, L); unbounded coordinates pass through."""
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"position has length {x.shape}, domain needs {domain.dim}")
    if isinstance(domain, Unbounded):
        return x.copy()
    L = domain.length if isinstance(domain, PeriodicInterval) else domain.box_length
    out = x - L * np.floor(x / L)
    out[out == L] = 0.0  # guard the rounding edge x = -eps
    return out


def minimum_image(domain: Domain, dx: np.ndarray) -> np.ndarray:
    """Shortest periodic image of a displacement; components in [-L/2, L/2)."""
    if not isinstance(domain, PeriodicBox):
        raise ValueError("minimum_image requires a PeriodicBox domain")
    dx = np.asarray(dx, dtype=float)
    L = domain.box_length
    return dx - L * np.floor(dx / L + 0.5)


# ---------------------------------------------------------------------------
# Potentials


@dataclass(frozen=True)
class Quadratic:
    """V(x) = alpha * |x|^2 / 2, so the drift is -alpha * x."""

    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def domain(self) -> Domain:
        return Unbounded(self.dim)


@dataclass(frozen=True)
class Cosine:
    """V(x) = cos(x) on the periodic interval [0, 2*pi)."""

    def domain(self) -> Domain:
        return PeriodicInterval(TWO_PI)


@dataclass(frozen=True)
class LennardJonesBox:
    particles: int
    box_length: float

    def __post_init__(self):
        if self.particles < 2:
            raise ValueError("need at least two particles")
        if not self.box_length > 0:
            raise ValueError("box length must be positive")

    def domain(self) -> Domain:
        return PeriodicBox(self.particles, self.box_length)


PotentialSpec = Quadratic | Cosine | LennardJonesBox


@dataclass(frozen=True)
class Configuration:
    """A d-dimensional position tied to its domain."""

    position: np.ndarray
    domain: Domain

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (self.domain.dim,):
            raise ValueError(
                f"position has shape {pos.shape}, domain needs ({self.domain.dim},)"
            )
        object.__setattr__(self, "position", pos)

    def wrapped(self) -> "Configuration":
        return Configuration(wrap(self.domain, self.position), self.domain)


def _check_compatible(spec: PotentialSpec, x: Configuration) -> None:
    expected = spec.domain().dim
    if x.position.shape != (expected,):
        raise ValueError(
            f"configuration has {x.position.shape[0]} coordinates, "
            f"potential needs {expected}"
        )


def _lj_pair_table(spec: LennardJonesBox, pos: np.ndarray):
    """Minimum-image separations and squared distances for all i<j pairs."""
    n = spec.particles
    q = pos.reshape(n, 3)
    iu, ju = np.triu_indices(n, k=1)
    d = q[iu] - q[ju]
    L = spec.box_length
    d -= L * np.floor(d / L + 0.5)
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 < LJ_SINGULAR_DISTANCE ** 2):
        raise SingularConfigurationError(
            "pair distance below %.1e" % LJ_SINGULAR_DISTANCE
        )
    return iu, ju, d, r2


def energy(spec: PotentialSpec, x: Configuration) -> float:
    """Potential energy V(x)."""
    _check_compatible(spec, x)
    pos = x.position
    if isinstance(spec, Quadratic):
        return 0.5 * spec.alpha * float(pos @ pos)
    if isinstance(spec, Cosine):
        return math.cos(pos[0])  # libm, bit-identical to the kernels
    iu, ju, d, r2 = _lj_pair_table(spec, pos)
    inv6 = 1.0 / r2 ** 3
    return float(np.sum(inv6 * inv6 - inv6))


def force(spec: PotentialSpec, x: Configuration) -> np.ndarray:
    """Drift a(x) = -grad V(x)."""
    _check_compatible(spec, x)
    pos = x.position
    if isinstance(spec, Quadratic):
        return -spec.alpha * pos
    if isinstance(spec, Cosine):
        return np.array([math.sin(pos[0])])
    n = spec.particles
    iu, ju, d, r2 = _lj_pair_table(spec, pos)
    inv2 = 1.0 / r2
    inv6 = inv2 ** 3
    coef = (12.0 * inv6 * inv6 - 6.0 * inv6) * inv2
    pair_force = coef[:, None] * d
    f = np.zeros((n, 3))
    np.add.at(f, iu, pair_force)
    np.subtract.at(f, ju, pair_force)
    return f.reshape(3 * n)


def lattice_configuration(spec: LennardJonesBox) -> Configuration:
    """Simple cubic lattice filling the box; collision-free starting point."""
    n = spec.particles
    side = round(n ** (1.0 / 3.0))
    if side ** 3 != n:
        raise ValueError("particle count must be a perfect cube for a cubic lattice")
    a = spec.box_length / side
    grid = np.arange(side) * a
    pts = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1)
    return Configuration(pts.reshape(-1), spec.domain())
