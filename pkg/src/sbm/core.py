"""Grid geometry, field storage, deterministic RNG streams, and quadrature.

Everything downstream (time steppers, particle systems, estimators) is built
on the types in this module.  All types except :class:`FieldPair` are frozen;
a ``FieldPair`` is owned by exactly one replica at a time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Stream tags. Streams with different (replica_index, stream_tag) are
# statistically independent, so one replica can drive the two field noises,
# the particle motions and the colour clocks from separate streams.
TAG_NOISE_U = 0
TAG_NOISE_V = 1
TAG_PARTICLES = 2
TAG_CLOCKS = 3
TAG_STARTS = 4

BOUNDARY_PINNED = "dirichlet-pinned-to-initial"


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid on [x_min, x_max] with n_cells cells."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min ({self.x_min}) must be < x_max ({self.x_max})")
        if self.n_cells < 2:
            raise ValueError(f"n_cells must be >= 2, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def nearest_cell(self, x: float) -> int:
        """Index of the cell whose centre is closest to x."""
        i = int(round((x - self.x_min) / self.dx - 0.5))
        return min(max(i, 0), self.n_cells - 1)


def default_halfwidth(T: float, gamma: float) -> float:
    """Default half-width of the truncated domain for a horizon-T run.

    Far-field cells must stay at their initial levels over [0, T]; the
    compactly propagating interface makes this a convergence parameter, and
    a doubling-W stability check is part of the acceptance suite.
    """
    return 6.0 * math.sqrt(T) + 6.0 * math.sqrt(gamma * T)


def grid_for_horizon(T: float, gamma: float, dx: float) -> GridSpec:
    """Symmetric grid [-W, W] with the default half-width rule, snapped to dx."""
    half = default_halfwidth(max(T, 1e-12), gamma)
    n_half = int(math.ceil(half / dx))
    return GridSpec(-n_half * dx, n_half * dx, 2 * n_half)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the correlated branching pair.

    rho is the noise correlation in [-1, 1], gamma >= 0 the branching rate
    (gamma = 0 degenerates to the deterministic heat pair, used as an oracle),
    dt the time step.  The explicit Laplacian requires dt <= dx^2 / 2.

    ``support_cutoff`` scales the per-cell kill threshold
    beta * gamma * (other field) * dt / dx below which a population is set to
    zero after each step.  Clamping negative excursions to zero turns the
    square-root noise into a positive drift wherever a field is below its
    per-step noise scale, which ratchets the parabolic stencil's infinitesimal
    leakage into spurious invasions; the cutoff removes exactly that pedestal
    (its fixed point is ~ 0.16 gamma v dt / dx), vanishes under refinement,
    and is invariant under the diffusive-rescaling law equivalence.
    """

    rho: float
    gamma: float
    dt: float
    grid: GridSpec
    boundary: str = BOUNDARY_PINNED
    support_cutoff: float = 0.3

    def __post_init__(self) -> None:
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.support_cutoff < 0.0:
            raise ValueError("support_cutoff must be >= 0")
        dx = self.grid.dx
        if self.dt > dx * dx / 2.0 * (1.0 + 1e-12):
            raise ValueError(
                f"CFL violation: dt = {self.dt} exceeds dx^2/2 = {dx * dx / 2.0}"
            )
        if self.boundary != BOUNDARY_PINNED:
            raise ValueError(f"unknown boundary condition {self.boundary!r}")


@dataclass
class FieldPair:
    """The two population densities sampled on the grid at model time t."""

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def validate(self, grid: GridSpec) -> None:
        for name, a in (("u", self.u), ("v", self.v)):
            if a.shape[-1] != grid.n_cells:
                raise ValueError(f"{name} has {a.shape[-1]} cells, grid expects {grid.n_cells}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            if np.any(a < 0):
                raise ValueError(f"{name} contains negative values")
        if self.t < 0:
            raise ValueError(f"t must be >= 0, got {self.t}")

    def copy(self) -> "FieldPair":
        return FieldPair(self.u.copy(), self.v.copy(), self.t)


@dataclass(frozen=True)
class RngStream:
    """Addressable counter-based random stream.

    The generator is a pure function of (master_seed, replica_index,
    stream_tag); streams with distinct addresses are independent.  Built on
    Philox so replicas can run in any order on any number of workers.
    """

    master_seed: int
    replica_index: int = 0
    stream_tag: int = 0

    def __post_init__(self) -> None:
        if self.replica_index < 0:
            raise ValueError("replica_index must be >= 0")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.replica_index, self.stream_tag)
        )
        return np.random.Generator(np.random.Philox(ss))

    def with_tag(self, tag: int) -> "RngStream":
        return RngStream(self.master_seed, self.replica_index, tag)


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo value with standard error over n_replicas replicas.

    ``std_error`` is the sample standard deviation divided by sqrt(n);
    complex estimates carry the 2-norm of the component standard errors.
    ``flags`` records reliability diagnostics, it never hides a value.
    """

    value: complex | float
    std_error: float
    n_replicas: int
    flags: tuple[str, ...] = ()

    @classmethod
    def from_samples(cls, samples: np.ndarray, flags: tuple[str, ...] = ()) -> "MomentEstimate":
        samples = np.asarray(samples)
        n = samples.shape[0]
        if n < 1:
            raise ValueError("need at least one sample")
        if np.iscomplexobj(samples):
            re = cls.from_samples(samples.real)
            im = cls.from_samples(samples.imag)
            se = math.hypot(re.std_error, im.std_error)
            return cls(complex(re.value, im.value), se, n, flags)
        mean = float(np.sum(samples, dtype=np.float64) / n)
        if n == 1:
            return cls(mean, 0.0, 1, flags)
        var = float(np.sum((samples - mean) ** 2, dtype=np.float64) / (n - 1))
        return cls(mean, math.sqrt(var / n), n, flags)

    @property
    def unreliable(self) -> bool:
        return "unreliable" in self.flags


def combined_std_error(*errors: float) -> float:
    """Standard error of a sum/difference of independent estimates."""
    return math.sqrt(sum(e * e for e in errors))


def derive_seed(master_seed: int, label: str) -> int:
    """Deterministic sub-seed for an independent ensemble, keyed by label."""
    import zlib

    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(zlib.crc32(label.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_heaviside_ic(grid: GridSpec) -> FieldPair:
    """Complementary step initial data: u = 1 left of 0, v = 1 right of 0.

    A cell is classified by the sign of its centre, which keeps u*v = 0
    exactly on the grid.
    """
    x = grid.centers()
    u = np.where(x < 0.0, 1.0, 0.0)
    v = np.where(x > 0.0, 1.0, 0.0)
    return FieldPair(u, v, 0.0)


def make_constant_ic(grid: GridSpec, level: float = 1.0) -> FieldPair:
    """Flat initial data u = v = level, used for the moment probes."""
    n = grid.n_cells
    return FieldPair(np.full(n, level), np.full(n, level), 0.0)


def pair_field(field_values: np.ndarray, test_fn, grid: GridSpec) -> float:
    """Midpoint quadrature of a per-cell field against a test function."""
    phi = np.asarray(test_fn(grid.centers()), dtype=np.float64)
    if not np.all(np.isfinite(phi)):
        raise ValueError("test function takes non-finite values on the grid")
    return float(np.sum(np.asarray(field_values) * phi) * grid.dx)


def pair_values(field_values: np.ndarray, phi_values: np.ndarray, grid: GridSpec) -> float:
    """pair_field for a test function already tabulated on the grid."""
    return float(np.sum(np.asarray(field_values) * np.asarray(phi_values)) * grid.dx)


def draw_correlated_noise(
    rho: float,
    shape: tuple[int, ...],
    scale: float,
    gen1: np.random.Generator,
    gen2: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One increment of the pair of correlated discrete white noises.

    Per cell the pair is (g, rho*g + sqrt(1-rho^2)*h) scaled by ``scale``;
    entries are independent across cells.
    """
    g = gen1.standard_normal(shape)
    h = gen2.standard_normal(shape)
    xi1 = scale * g
    xi2 = scale * (rho * g + math.sqrt(max(0.0, 1.0 - rho * rho)) * h)
    return xi1, xi2


def sample_correlated_noise(
    rho: float, grid: GridSpec, dt: float, rng1: RngStream, rng2: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the correlated noise pair for one step on the whole grid.

    Variance dt/dx per cell, so quadratures of the accumulated noise against
    a squared test function match the continuum covariance.
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    scale = math.sqrt(dt / grid.dx)
    return draw_correlated_noise(rho, (grid.n_cells,), scale, rng1.generator(), rng2.generator())


def gaussian_smooth(values: np.ndarray, t: float, grid: GridSpec) -> np.ndarray:
    """Heat semigroup at time t applied by exact discrete Gaussian convolution.

    The kernel is the heat kernel sampled at cell offsets and renormalised to
    sum 1 (mass conserving).  Fields are edge-padded: simulated fields sit at
    their pinned far-field levels, decaying test functions at ~0, so edge
    padding is correct for both.
    """
    if t <= 0.0:
        return np.array(values, dtype=np.float64, copy=True)
    dx = grid.dx
    halfwidth = int(math.ceil(8.0 * math.sqrt(t) / dx))
    halfwidth = min(halfwidth, grid.n_cells - 1)
    offsets = np.arange(-halfwidth, halfwidth + 1) * dx
    kernel = np.exp(-offsets * offsets / (2.0 * t))
    kernel /= kernel.sum()
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        padded = np.pad(values, halfwidth, mode="edge")
        return np.convolve(padded, kernel, mode="valid")
    flat = values.reshape(-1, values.shape[-1])
    padded = np.pad(flat, ((0, 0), (halfwidth, halfwidth)), mode="edge")
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = np.convolve(padded[i], kernel, mode="valid")
    return out.reshape(values.shape)
