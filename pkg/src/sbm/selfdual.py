"""Exponential self-duality, separation-of-types probe, and the diffusive
scaling equivalence.

The pairing of two field pairs against two test functions is

    <<mu, nu, phi, psi>> = -sqrt(1-rho) <mu+nu, phi+psi>
                           + i sqrt(1+rho) <mu-nu, phi-psi>

and F = exp(<< >>), which has |F| <= 1 on nonnegative inputs.  The
self-duality check runs two independent ensembles, one from each initial
pair, and compares E[F(u_T, v_T, ic2)] with E[F(ic1, u~_T, v~_T)].
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import integrate

from .core import (
    FieldPair,
    GridSpec,
    ModelParams,
    MomentEstimate,
    combined_std_error,
    derive_seed,
    default_halfwidth,
    gaussian_smooth,
    make_heaviside_ic,
    pair_values,
)
from .funcs import HeavisideLeft, HeavisideRight
from .moments import _MultiPointFunctional
from . import dual, spde


def duality_pairing(mu, nu, phi, psi, rho: float, grid: GridSpec) -> complex:
    """The mixed pairing of two field pairs on the grid.

    All four arguments are per-cell arrays; |rho| = 1 is rejected because one
    of the sqrt weights degenerates.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    mu, nu, phi, psi = (np.asarray(a, dtype=np.float64) for a in (mu, nu, phi, psi))
    for a in (mu, nu, phi, psi):
        if not np.all(np.isfinite(a)):
            raise ValueError("pairing inputs must be finite on the grid")
    real = -math.sqrt(1.0 - rho) * pair_values(mu + nu, phi + psi, grid)
    imag = math.sqrt(1.0 + rho) * pair_values(mu - nu, phi - psi, grid)
    return complex(real, imag)


def self_duality_fn(mu, nu, phi, psi, rho: float, grid: GridSpec) -> complex:
    return cmath.exp(duality_pairing(mu, nu, phi, psi, rho, grid))


@dataclass(frozen=True)
class _FFunctional:
    """Per-replica F(u_T, v_T, phi, psi) over an ensemble."""

    phi: np.ndarray
    psi: np.ndarray
    rho: float

    def __call__(self, fields) -> dict:
        dx = fields.params.grid.dx
        plus = self.phi + self.psi
        minus = self.phi - self.psi
        u_T, v_T = fields.u[-1], fields.v[-1]
        a = ((u_T + v_T) @ plus) * dx
        b = ((u_T - v_T) @ minus) * dx
        vals = np.exp(-math.sqrt(1.0 - self.rho) * a) * np.exp(
            1j * math.sqrt(1.0 + self.rho) * b
        )
        return {"f_values": vals}


@dataclass(frozen=True)
class SelfDualityReport:
    lhs: MomentEstimate
    rhs: MomentEstimate
    residual: float
    combined_se: float
    allowance: float
    passed: bool


def _f_ensemble(
    ic: FieldPair,
    phi: np.ndarray,
    psi: np.ndarray,
    T: float,
    params: ModelParams,
    n_replicas: int,
    seed: int,
    workers,
) -> MomentEstimate:
    functional = _FFunctional(np.asarray(phi, float), np.asarray(psi, float), params.rho)
    results = spde.run_ensemble(
        ic, T, params, n_replicas, seed, (T,), functional, workers=workers
    )
    vals = np.concatenate([r["f_values"] for r in results])
    return MomentEstimate.from_samples(vals)


def self_duality_check(
    ic1: FieldPair,
    ic2: FieldPair,
    T: float,
    params: ModelParams,
    n_replicas: int,
    seed: int,
    allowance: float | None = None,
    workers: int | None = None,
) -> SelfDualityReport:
    """Two-ensemble test of E[F(u_T, v_T, ic2)] = E[F(ic1, u~_T, v~_T)].

    ic1 may be tempered (e.g. complementary steps); ic2 must decay below
    1e-12 at the domain boundary.  The ensembles use independent seed
    branches; pass means |lhs - rhs| within 3 combined standard errors plus a
    discretisation allowance (default 2 dx).
    """
    if params.rho >= 0.0:
        raise ValueError("self-duality check requires rho < 0")
    grid = params.grid
    for name, arr in (("u", ic2.u), ("v", ic2.v)):
        if max(abs(arr[0]), abs(arr[-1])) > 1e-12:
            raise ValueError(f"ic2.{name} does not decay below 1e-12 at the boundary")
    lhs = _f_ensemble(
        ic1, ic2.u, ic2.v, T, params, n_replicas, derive_seed(seed, "selfdual-lhs"), workers
    )
    rhs = _f_ensemble(
        ic2, ic1.u, ic1.v, T, params, n_replicas, derive_seed(seed, "selfdual-rhs"), workers
    )
    residual = abs(lhs.value - rhs.value)
    se = combined_std_error(lhs.std_error, rhs.std_error)
    allow = 2.0 * grid.dx if allowance is None else allowance
    return SelfDualityReport(lhs, rhs, residual, se, allow, residual <= 3.0 * se + allow)


def heat_apply_fn(f, t: float, x: float) -> float:
    """(S_t f)(x) by quadrature against the heat kernel (variance t)."""
    if t <= 0:
        return float(np.asarray(f(np.array([x])))[0])
    scale = 1.0 / math.sqrt(2.0 * math.pi * t)

    def integrand(y: float) -> float:
        return scale * math.exp(-((y - x) ** 2) / (2.0 * t)) * float(np.asarray(f(np.array([y])))[0])

    val, _ = integrate.quad(integrand, -math.inf, math.inf, epsabs=1e-12, epsrel=1e-9)
    return float(val)


@dataclass(frozen=True)
class _SmoothedProductFunctional:
    eps_list: tuple[float, ...]
    cells: tuple[int, ...]

    def __call__(self, fields) -> dict:
        grid = fields.params.grid
        u_T, v_T = fields.u[-1], fields.v[-1]
        out = {}
        for eps in self.eps_list:
            su = gaussian_smooth(u_T, eps, grid)
            sv = gaussian_smooth(v_T, eps, grid)
            for c in self.cells:
                out[f"sp_{eps}_{c}"] = su[:, c] * sv[:, c]
        return out


@dataclass(frozen=True)
class SeparationEntry:
    eps: float
    x: float
    estimate: MomentEstimate
    dual_indicator_bound: MomentEstimate
    ceiling: float


@dataclass(frozen=True)
class SeparationReport:
    gamma: float
    rho: float
    T: float
    entries: tuple[SeparationEntry, ...]

    def entry(self, eps: float, x: float) -> SeparationEntry:
        for e in self.entries:
            if e.eps == eps and e.x == x:
                return e
        raise KeyError((eps, x))


def separation_probe(
    eps_list,
    x_list,
    T: float,
    params: ModelParams,
    n_replicas: int,
    seed: int,
    u0=None,
    v0=None,
    dual_dt: float = dual.DEFAULT_DT,
    workers: int | None = None,
) -> SeparationReport:
    """Estimate E[S_eps u_T(x) S_eps v_T(x)] with its dual floor and ceiling.

    Per (eps, x) the report carries the field-side estimate, the two-motion
    dual value of the smeared no-collision functional (the large-rate limit
    of the estimate), and the analytic heat ceiling S_{T+eps}u0 S_{T+eps}v0.
    """
    grid = params.grid
    u0 = HeavisideLeft() if u0 is None else u0
    v0 = HeavisideRight() if v0 is None else v0
    ic = FieldPair(
        np.asarray(u0(grid.centers()), float), np.asarray(v0(grid.centers()), float)
    )
    cells = tuple(grid.nearest_cell(x) for x in x_list)
    functional = _SmoothedProductFunctional(tuple(eps_list), cells)
    results = spde.run_ensemble(
        ic, T, params, n_replicas, seed, (T,), functional, workers=workers
    )
    entries = []
    for eps in eps_list:
        for x, c in zip(x_list, cells):
            vals = np.concatenate([r[f"sp_{eps}_{c}"] for r in results])
            est = MomentEstimate.from_samples(vals)
            bound = dual.two_motion_estimate(
                u0,
                v0,
                x,
                x,
                T,
                params.gamma,
                params.rho,
                n_replicas,
                derive_seed(seed, f"sep-dual-{eps}-{x}"),
                dt=dual_dt,
                weight="indicator",
                start_jitter=eps,
                workers=workers,
            )
            ceiling = heat_apply_fn(u0, T + eps, x) * heat_apply_fn(v0, T + eps, x)
            entries.append(SeparationEntry(eps, x, est, bound, ceiling))
    return SeparationReport(params.gamma, params.rho, T, tuple(entries))


@dataclass(frozen=True)
class ScalingComparison:
    name: str
    side_a: MomentEstimate
    side_b: MomentEstimate
    difference: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ScalingReport:
    K: float
    gamma: float
    rho: float
    T: float
    comparisons: tuple[ScalingComparison, ...]
    passed: bool


def scaling_equivalence_check(
    K: float,
    T: float,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dx: float = 0.1,
    point_pairs=((0.0, 0.0), (-0.5, 0.5), (0.25, 1.0)),
    width_eps: float = 0.05,
    width_p: float = 0.5,
    width_times: tuple[float, ...] | None = None,
    workers: int | None = None,
) -> ScalingReport:
    """Diffusive scaling equivalence at factor K from complementary steps.

    Ensemble A runs rate gamma to horizon K^2 T and is read at K-scaled
    points / widths; ensemble B runs rate K gamma to horizon T on a grid
    refined by 1/K (the exactly rescaled problem, including the truncation).
    Every comparison must agree within 3 combined standard errors.
    """
    if K <= 0:
        raise ValueError("K must be > 0")
    half_a = default_halfwidth(K * K * T, gamma)
    n_half = int(math.ceil(half_a / dx))
    grid_a = GridSpec(-n_half * dx, n_half * dx, 2 * n_half)
    dx_b = dx / K
    grid_b = GridSpec(grid_a.x_min / K, grid_a.x_max / K, grid_a.n_cells)
    dt_a = min(dx * dx / 4.0, 0.1 / max(gamma, 1e-9))
    dt_b = min(dx_b * dx_b / 4.0, 0.1 / max(K * gamma, 1e-9))
    params_a = ModelParams(rho, gamma, dt_a, grid_a)
    params_b = ModelParams(rho, K * gamma, dt_b, grid_b)
    if width_times is None:
        width_times = (T / 2.0, T)
    width_times = tuple(sorted(width_times))

    comparisons = []
    cells_a = []
    cells_b = []
    for x, y in point_pairs:
        cells_a.append((grid_a.nearest_cell(K * x), grid_a.nearest_cell(K * y)))
        cells_b.append((grid_b.nearest_cell(x), grid_b.nearest_cell(y)))

    # one ensemble per side: widths at every record time, points at the last
    res_a = spde.run_ensemble(
        make_heaviside_ic(grid_a),
        K * K * T,
        params_a,
        n_replicas,
        derive_seed(seed, "scaling-a"),
        tuple(K * K * t for t in width_times),
        _ScalingFunctional(tuple(cells_a), K * width_eps, width_p),
        workers=workers,
    )
    res_b = spde.run_ensemble(
        make_heaviside_ic(grid_b),
        T,
        params_b,
        n_replicas,
        derive_seed(seed, "scaling-b"),
        width_times,
        _ScalingFunctional(tuple(cells_b), width_eps, width_p),
        workers=workers,
    )
    for idx, (x, y) in enumerate(point_pairs):
        a = MomentEstimate.from_samples(
            np.concatenate([r[f"uv_{idx}"][-1] for r in res_a])
        )
        b = MomentEstimate.from_samples(
            np.concatenate([r[f"uv_{idx}"][-1] for r in res_b])
        )
        diff = abs(a.value - b.value)
        tol = 3.0 * combined_std_error(a.std_error, b.std_error)
        comparisons.append(
            ScalingComparison(f"E[u v] at ({x}, {y})", a, b, diff, tol, diff <= tol)
        )

    w_a = np.concatenate([r["width_p"] for r in res_a], axis=1)
    w_b = np.concatenate([r["width_p"] for r in res_b], axis=1)
    for k, t in enumerate(width_times):
        ea = MomentEstimate.from_samples(w_a[k] / K**width_p)
        eb = MomentEstimate.from_samples(w_b[k])
        diff = abs(ea.value - eb.value)
        tol = 3.0 * combined_std_error(ea.std_error, eb.std_error)
        comparisons.append(
            ScalingComparison(
                f"E[width^{width_p}] at t = {t}", ea, eb, diff, tol, diff <= tol
            )
        )
    return ScalingReport(
        K, gamma, rho, T, tuple(comparisons), all(c.passed for c in comparisons)
    )


@dataclass(frozen=True)
class _ScalingFunctional:
    cell_pairs: tuple[tuple[int, int], ...]
    width_eps: float
    width_p: float

    def __call__(self, fields) -> dict:
        from .interface import _batch_widths

        grid = fields.params.grid
        x = grid.centers()
        out = _MultiPointFunctional(self.cell_pairs)(fields)
        n_rec, B, _ = fields.u.shape
        width_p = np.empty((n_rec, B))
        for k in range(n_rec):
            width_p[k] = (
                _batch_widths(fields.u[k], fields.v[k], x, grid.dx, self.width_eps, 0.0)
                ** self.width_p
            )
        out["width_p"] = width_p
        return out

