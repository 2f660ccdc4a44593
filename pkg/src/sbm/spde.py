"""Explicit Euler-Maruyama stepper for the correlated branching pair.

The update per interior cell i is

    u <- u + (dt/2) * (u[i-1] - 2 u[i] + u[i+1]) / dx^2 + sqrt(gamma u v) * xi1
    v <- v + (dt/2) * laplacian(v)                      + sqrt(gamma u v) * xi2

with the correlated white-noise pair (xi1, xi2) of variance dt/dx per cell,
negatives clamped to zero (counted), and boundary cells pinned to their
initial values.  The running quadratic-variation field accumulates
gamma * u * v * dt per step.

Everything ensemble-shaped runs on (replicas, cells) arrays grouped into
fixed blocks, one RNG stream address per block, so results are independent
of worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import (
    TAG_NOISE_U,
    TAG_NOISE_V,
    FieldPair,
    GridSpec,
    ModelParams,
    MomentEstimate,
    RngStream,
    draw_correlated_noise,
    gaussian_smooth,
    pair_values,
)
from .parallel import Block, make_blocks, map_blocks


class SimulationError(RuntimeError):
    """A replica produced non-finite field values."""


@dataclass
class Trajectory:
    """Recorded snapshots of one replica, with the quadratic-variation field."""

    snapshots: list[tuple[float, FieldPair]]
    record_times: tuple[float, ...]
    lambda_snapshots: list[np.ndarray]


@dataclass
class LambdaField:
    """Cumulative per-cell gamma * integral of u v ds up to time t."""

    values: np.ndarray
    t: float


@dataclass(frozen=True)
class _BatchFields:
    """Ensemble fields at the record times, shape (n_rec, B, n_cells)."""

    u: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    times: tuple[float, ...]
    params: ModelParams


@dataclass(frozen=True)
class _RunSpec:
    ic_u: np.ndarray
    ic_v: np.ndarray
    params: ModelParams
    n_steps: int
    dt: float
    record_steps: tuple[int, ...]
    record_times: tuple[float, ...]
    qv_weights: np.ndarray | None = None  # (n_phi, n_steps, n_cells)
    functional: object | None = None


def _time_axis(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and effective dt covering [0, T] exactly."""
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return 0, dt
    n_steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return n_steps, T / n_steps


def _record_steps(record_times, n_steps: int, dt: float) -> tuple[tuple[int, ...], tuple[float, ...]]:
    steps = []
    for t in record_times:
        if t < -1e-12 or t > n_steps * dt + 1e-9:
            raise ValueError(f"record time {t} outside [0, T]")
        steps.append(min(max(int(round(t / dt)), 0), n_steps) if n_steps else 0)
    steps = tuple(sorted(steps))
    times = tuple(s * dt for s in steps)
    return steps, times


def _run_block(spec: _RunSpec, block: Block) -> dict:
    params = spec.params
    grid = params.grid
    n = grid.n_cells
    dx = grid.dx
    dt = spec.dt
    B = block.count
    gen_u = RngStream(block.master_seed, block.index, TAG_NOISE_U).generator()
    gen_v = RngStream(block.master_seed, block.index, TAG_NOISE_V).generator()

    u = np.tile(spec.ic_u, (B, 1))
    v = np.tile(spec.ic_v, (B, 1))
    lam = np.zeros_like(u)
    clamped = np.zeros(B)
    n_phi = 0 if spec.qv_weights is None else spec.qv_weights.shape[0]
    qv = np.zeros((n_phi, B)) if n_phi else None

    n_rec = len(spec.record_steps)
    rec_u = np.empty((n_rec, B, n))
    rec_v = np.empty((n_rec, B, n))
    rec_lam = np.empty((n_rec, B, n))
    rec_pos = 0

    def record_now(step: int) -> int:
        nonlocal rec_pos
        while rec_pos < n_rec and spec.record_steps[rec_pos] == step:
            rec_u[rec_pos] = u
            rec_v[rec_pos] = v
            rec_lam[rec_pos] = lam
            rec_pos += 1
        return rec_pos

    record_now(0)
    scale = math.sqrt(dt / dx)
    gamma = params.gamma
    half_dt_over_dx2 = 0.5 * dt / (dx * dx)
    kill_scale = params.support_cutoff * gamma * dt / dx
    for step in range(spec.n_steps):
        uv = u * v
        if n_phi:
            # left-endpoint accumulation of the predicted quadratic variation
            qv += gamma * dx * dt * np.einsum("pn,bn->pb", spec.qv_weights[:, step], uv)
        lam += gamma * dt * uv
        xi1, xi2 = draw_correlated_noise(params.rho, u.shape, scale, gen_u, gen_v)
        coef = np.sqrt(gamma * uv)
        lap_u = u[:, :-2] - 2.0 * u[:, 1:-1] + u[:, 2:]
        lap_v = v[:, :-2] - 2.0 * v[:, 1:-1] + v[:, 2:]
        new_u = u[:, 1:-1] + half_dt_over_dx2 * lap_u + coef[:, 1:-1] * xi1[:, 1:-1]
        new_v = v[:, 1:-1] + half_dt_over_dx2 * lap_v + coef[:, 1:-1] * xi2[:, 1:-1]
        clamped += np.count_nonzero(new_u < 0.0, axis=1) + np.count_nonzero(new_v < 0.0, axis=1)
        np.maximum(new_u, 0.0, out=new_u)
        np.maximum(new_v, 0.0, out=new_v)
        if kill_scale > 0.0:
            ku = new_u < kill_scale * new_v
            kv = new_v < kill_scale * new_u
            new_u[ku] = 0.0
            new_v[kv] = 0.0
        u[:, 1:-1] = new_u
        v[:, 1:-1] = new_v
        if (step + 1) % 256 == 0 and not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise SimulationError(
                f"non-finite field in replica block {block.index} at step {step + 1}"
            )
        record_now(step + 1)

    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise SimulationError(f"non-finite field in replica block {block.index} at final step")
    total_updates = max(1, spec.n_steps * 2 * (n - 2))
    out = {"clamp_fraction": clamped / total_updates}
    if qv is not None:
        out["qv"] = qv
    fields = _BatchFields(rec_u, rec_v, rec_lam, spec.record_times, params)
    if spec.functional is None:
        out["fields"] = fields
    else:
        out.update(spec.functional(fields))
    return out


def run_ensemble(
    ic: FieldPair,
    T: float,
    params: ModelParams,
    n_replicas: int,
    seed: int,
    record_times,
    functional,
    qv_weights: np.ndarray | None = None,
    workers: int | None = None,
) -> list[dict]:
    """Simulate a replica ensemble and apply a per-block reduction functional.

    ``functional`` is a picklable callable mapping _BatchFields to a dict of
    per-replica arrays (replica axis last).  Returns the per-block dicts in
    block order; concatenate with parallel.gather_samples.
    """
    ic.validate(params.grid)
    n_steps, dt = _time_axis(T, params.dt)
    steps, times = _record_steps(record_times, n_steps, dt)
    spec = _RunSpec(
        np.asarray(ic.u, dtype=np.float64),
        np.asarray(ic.v, dtype=np.float64),
        params,
        n_steps,
        dt,
        steps,
        times,
        qv_weights,
        functional,
    )
    blocks = make_blocks(n_replicas, seed)
    return map_blocks(partial(_run_block, spec), blocks, workers)


def em_step(state: FieldPair, params: ModelParams, rng_pair: tuple[RngStream, RngStream]) -> FieldPair:
    """One explicit Euler-Maruyama step of a single replica.

    The generators are built fresh from the stream pair, so stepping manually
    in a loop should instead use :func:`simulate`, which keeps one generator
    per noise for the whole path.
    """
    state.validate(params.grid)
    gen_u = rng_pair[0].generator()
    gen_v = rng_pair[1].generator()
    u, v, clamped = _single_step(state.u, state.v, state.u, state.v, params, params.dt, gen_u, gen_v)
    return FieldPair(u, v, state.t + params.dt)


def _single_step(u, v, pin_u, pin_v, params, dt, gen_u, gen_v):
    grid = params.grid
    dx = grid.dx
    scale = math.sqrt(dt / dx)
    xi1, xi2 = draw_correlated_noise(params.rho, u.shape, scale, gen_u, gen_v)
    coef = np.sqrt(params.gamma * np.maximum(u, 0.0) * np.maximum(v, 0.0))
    lap_u = u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]
    lap_v = v[..., :-2] - 2.0 * v[..., 1:-1] + v[..., 2:]
    c = 0.5 * dt / (dx * dx)
    new_u = np.array(pin_u, dtype=np.float64, copy=True)
    new_v = np.array(pin_v, dtype=np.float64, copy=True)
    iu = u[..., 1:-1] + c * lap_u + coef[..., 1:-1] * xi1[..., 1:-1]
    iv = v[..., 1:-1] + c * lap_v + coef[..., 1:-1] * xi2[..., 1:-1]
    clamped = int(np.count_nonzero(iu < 0.0) + np.count_nonzero(iv < 0.0))
    iu = np.maximum(iu, 0.0)
    iv = np.maximum(iv, 0.0)
    kill_scale = params.support_cutoff * params.gamma * dt / dx
    if kill_scale > 0.0:
        ku = iu < kill_scale * iv
        kv = iv < kill_scale * iu
        iu[ku] = 0.0
        iv[kv] = 0.0
    new_u[..., 1:-1] = iu
    new_v[..., 1:-1] = iv
    if not (np.all(np.isfinite(new_u)) and np.all(np.isfinite(new_v))):
        raise SimulationError("non-finite field value after step")
    return new_u, new_v, clamped


def simulate(
    ic: FieldPair,
    T: float,
    params: ModelParams,
    rng: RngStream,
    record_times,
) -> tuple[Trajectory, LambdaField, float]:
    """Run one replica to horizon T, recording snapshots at the given times.

    Returns the trajectory, the accumulated quadratic-variation field and the
    fraction of cell updates that had to be clamped to zero.
    """
    ic.validate(params.grid)
    n_steps, dt = _time_axis(T, params.dt)
    steps, times = _record_steps(record_times, n_steps, dt)
    gen_u = rng.with_tag(TAG_NOISE_U).generator()
    gen_v = rng.with_tag(TAG_NOISE_V).generator()
    grid = params.grid
    u = np.asarray(ic.u, dtype=np.float64).copy()
    v = np.asarray(ic.v, dtype=np.float64).copy()
    pin_u = u.copy()
    pin_v = v.copy()
    lam = np.zeros_like(u)
    snapshots: list[tuple[float, FieldPair]] = []
    lambda_snaps: list[np.ndarray] = []
    clamped = 0

    def record(step):
        for s, t in zip(steps, times):
            if s == step:
                snapshots.append((t, FieldPair(u.copy(), v.copy(), t)))
                lambda_snaps.append(lam.copy())

    record(0)
    for step in range(n_steps):
        lam += params.gamma * dt * u * v
        u, v, c = _single_step(u, v, pin_u, pin_v, params, dt, gen_u, gen_v)
        clamped += c
        record(step + 1)
    total = max(1, n_steps * 2 * (grid.n_cells - 2))
    return (
        Trajectory(snapshots, times, lambda_snaps),
        LambdaField(lam, n_steps * dt),
        clamped / total,
    )


@dataclass(frozen=True)
class MartingaleReport:
    """Monte Carlo summary of the Green-function martingales for one test fn."""

    mean_M: MomentEstimate
    mean_N: MomentEstimate
    var_M: float
    var_M_se: float
    var_N: float
    cov_MN: float
    cov_MN_se: float
    predicted_var: MomentEstimate
    var_ratio: float
    var_ratio_se: float
    rho_hat: float
    rho_hat_se: float


@dataclass(frozen=True)
class _MartingaleFunctional:
    """Per-replica terminal pairings <u_T, phi> and <v_T, phi> for each phi."""

    phi_grid: np.ndarray  # (n_phi, n_cells)

    def __call__(self, fields: _BatchFields) -> dict:
        dx = fields.params.grid.dx
        u_T = fields.u[-1]
        v_T = fields.v[-1]
        return {
            "pair_u": np.einsum("pn,bn->pb", self.phi_grid, u_T) * dx,
            "pair_v": np.einsum("pn,bn->pb", self.phi_grid, v_T) * dx,
        }


def _batch_means(values: np.ndarray, stat, n_batches: int = 40):
    """Batch-means standard error of a statistic of replica samples."""
    n = values.shape[-1]
    if n < 8:
        return math.inf
    k = max(2, min(n_batches, n // 8))
    edges = np.linspace(0, n, k + 1, dtype=int)
    stats = np.array([stat(values[..., a:b]) for a, b in zip(edges[:-1], edges[1:])])
    return float(np.std(stats, ddof=1) / math.sqrt(k))


def martingale_check(
    phi,
    T: float,
    params: ModelParams,
    n_replicas: int,
    seed: int,
    ic: FieldPair | None = None,
    workers: int | None = None,
):
    """Test the martingale structure of the pair against its predicted
    quadratic variation.

    For each test function, M_T = <u_T, phi> - <u_0, S_T phi> with the heat
    semigroup applied by exact Gaussian convolution, likewise N_T; the
    predicted variance is accumulated during simulation from the running
    quadratic-variation integrand weighted by (S_{T-r} phi)^2.

    ``phi`` may be one callable or a sequence; returns one report, or a list.
    """
    phis = phi if isinstance(phi, (list, tuple)) else [phi]
    grid = params.grid
    if ic is None:
        from .core import make_heaviside_ic

        ic = make_heaviside_ic(grid)
    n_steps, dt = _time_axis(T, params.dt)
    x = grid.centers()
    phi_grid = np.array([np.asarray(p(x), dtype=np.float64) for p in phis])
    if not np.all(np.isfinite(phi_grid)):
        raise ValueError("test function takes non-finite values on the grid")
    # (S_{T-r} phi)^2 on the step grid, and S_T phi for the compensator
    qv_weights = np.empty((len(phis), n_steps, grid.n_cells))
    for p in range(len(phis)):
        for step in range(n_steps):
            qv_weights[p, step] = gaussian_smooth(phi_grid[p], T - step * dt, grid) ** 2
    smooth_T = np.array([gaussian_smooth(phi_grid[p], T, grid) for p in range(len(phis))])

    functional = _MartingaleFunctional(phi_grid)
    results = run_ensemble(
        ic, T, params, n_replicas, seed, (T,), functional, qv_weights=qv_weights, workers=workers
    )
    pair_u = np.concatenate([r["pair_u"] for r in results], axis=1)
    pair_v = np.concatenate([r["pair_v"] for r in results], axis=1)
    qv = np.concatenate([r["qv"] for r in results], axis=1)

    reports = []
    for p in range(len(phis)):
        comp_u = pair_values(ic.u, smooth_T[p], grid)
        comp_v = pair_values(ic.v, smooth_T[p], grid)
        M = pair_u[p] - comp_u
        N = pair_v[p] - comp_v
        var_M = float(np.var(M, ddof=1))
        var_N = float(np.var(N, ddof=1))
        cov = float(np.cov(M, N, ddof=1)[0, 1])
        pred = MomentEstimate.from_samples(qv[p])
        var_ratio = var_M / pred.value if pred.value > 0 else math.inf
        rho_hat = cov / var_M if var_M > 0 else math.nan

        pairs = np.stack([M, N, qv[p]])
        var_M_se = _batch_means(pairs, lambda s: float(np.var(s[0], ddof=1)))
        cov_se = _batch_means(pairs, lambda s: float(np.cov(s[0], s[1], ddof=1)[0, 1]))
        ratio_se = _batch_means(
            pairs, lambda s: float(np.var(s[0], ddof=1) / max(np.mean(s[2]), 1e-300))
        )
        rho_se = _batch_means(
            pairs, lambda s: float(np.cov(s[0], s[1], ddof=1)[0, 1] / max(np.var(s[0], ddof=1), 1e-300))
        )
        reports.append(
            MartingaleReport(
                mean_M=MomentEstimate.from_samples(M),
                mean_N=MomentEstimate.from_samples(N),
                var_M=var_M,
                var_M_se=var_M_se,
                var_N=var_N,
                cov_MN=cov,
                cov_MN_se=cov_se,
                predicted_var=pred,
                var_ratio=var_ratio,
                var_ratio_se=ratio_se,
                rho_hat=rho_hat,
                rho_hat_se=rho_se,
            )
        )
    if isinstance(phi, (list, tuple)):
        return reports
    return reports[0]
