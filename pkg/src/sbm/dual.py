"""Coloured Brownian particle dual and its Monte Carlo moment estimators.

Each of n particles performs an independent Brownian motion.  Any pair within
the eps band collects collision local time at rate 1/(2 eps); local time of
same-coloured pairs also drives that pair's clock, and when a clock exceeds
its Exp(gamma) threshold one member of the pair (chosen uniformly) flips
colour, after which every pair clock involving either member restarts with a
fresh threshold.  Mixed moments of the field pair equal expectations of

    prod_i f_{colour_i}(position_i) * exp(gamma * (L_eq + rho * L_neq))

over this particle system, which is what the estimators below average.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy import integrate

from .brownian import max_cdf, max_density
from .core import (
    TAG_CLOCKS,
    TAG_PARTICLES,
    TAG_STARTS,
    MomentEstimate,
    RngStream,
)
from .parallel import Block, make_blocks, map_blocks

DEFAULT_DT = 1e-3

# Particle replicas are cheap; bigger blocks amortise numpy call overhead.
PARTICLE_BLOCK = 2048


def pair_list(n: int) -> tuple[tuple[int, int], ...]:
    """Unordered particle pairs in ascending lexicographic order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def default_eps_band(dt: float) -> float:
    return 2.0 * math.sqrt(dt)


def _draw_thresholds(gen: np.random.Generator, gamma: float, shape) -> np.ndarray:
    if gamma == 0.0:
        return np.full(shape, np.inf)
    return gen.exponential(1.0 / gamma, shape)


@dataclass
class ColouredParticleSystem:
    """State of one replica of the coloured particle system."""

    positions: np.ndarray
    colours: np.ndarray  # values 1 / 2
    same_colour_clock: np.ndarray  # per pair, in pair_list order
    threshold: np.ndarray
    L_eq: float = 0.0
    L_neq: float = 0.0
    t: float = 0.0

    @property
    def n_particles(self) -> int:
        return len(self.positions)


def make_system(positions, colours, gamma: float, rng: RngStream) -> ColouredParticleSystem:
    positions = np.asarray(positions, dtype=np.float64).copy()
    colours = np.asarray(colours, dtype=np.int8).copy()
    if len(positions) != len(colours) or len(positions) < 1:
        raise ValueError("need matching, non-empty positions and colours")
    if not np.all(np.isin(colours, (1, 2))):
        raise ValueError("colours must be 1 or 2")
    n_pairs = len(pair_list(len(positions)))
    gen = rng.with_tag(TAG_CLOCKS).generator()
    return ColouredParticleSystem(
        positions,
        colours,
        np.zeros(n_pairs),
        _draw_thresholds(gen, gamma, n_pairs),
    )


class _BatchState:
    """Vectorised particle state over a replica block."""

    __slots__ = ("pos", "col", "clock", "thresh", "l_eq", "l_neq", "first_switch", "pairs")

    def __init__(self, pos, col, clock, thresh, l_eq, l_neq, first_switch, pairs):
        self.pos = pos
        self.col = col
        self.clock = clock
        self.thresh = thresh
        self.l_eq = l_eq
        self.l_neq = l_neq
        self.first_switch = first_switch
        self.pairs = pairs


def _step_batch(
    state: _BatchState,
    gamma: float,
    dt: float,
    eps_band: float,
    gen_particles: np.random.Generator,
    gen_clocks: np.random.Generator,
) -> None:
    pos, col = state.pos, state.col
    pos += math.sqrt(dt) * gen_particles.standard_normal(pos.shape)
    inc = dt / (2.0 * eps_band)
    for p, (i, j) in enumerate(state.pairs):
        touch = np.abs(pos[:, i] - pos[:, j]) <= eps_band
        same = col[:, i] == col[:, j]
        ts = touch & same
        state.l_eq += inc * ts
        state.l_neq += inc * (touch & ~same)
        state.clock[:, p] += inc * ts
    # threshold crossings in ascending pair order; colour equality is
    # re-evaluated after each flip so a cascade within one step stays
    # deterministic
    for p, (i, j) in enumerate(state.pairs):
        mask = (col[:, i] == col[:, j]) & (state.clock[:, p] > state.thresh[:, p])
        if not mask.any():
            continue
        hit = np.flatnonzero(mask)
        if state.first_switch is not None:
            fresh = np.isnan(state.first_switch[hit])
            state.first_switch[hit[fresh]] = state.clock[hit[fresh], p]
        pick_second = gen_clocks.random(hit.size) < 0.5
        flip = np.where(pick_second, j, i)
        col[hit, flip] = 3 - col[hit, flip]
        involved = [q for q, (a, b) in enumerate(state.pairs) if a in (i, j) or b in (i, j)]
        state.clock[np.ix_(hit, involved)] = 0.0
        state.thresh[np.ix_(hit, involved)] = _draw_thresholds(
            gen_clocks, gamma, (hit.size, len(involved))
        )


def dual_step(
    sys: ColouredParticleSystem,
    gamma: float,
    dt: float,
    eps_band: float,
    rng,
) -> ColouredParticleSystem:
    """Advance one replica by one step.

    ``rng`` is either a pair of generators (particles, clocks), which is what
    a stepping loop should hold on to, or an RngStream from which a fresh
    pair is derived (single-shot use).
    """
    if dt <= 0 or eps_band <= 0:
        raise ValueError("dt and eps_band must be > 0")
    if isinstance(rng, RngStream):
        gens = (rng.with_tag(TAG_PARTICLES).generator(), rng.with_tag(TAG_CLOCKS).generator())
    else:
        gens = rng
    state = _BatchState(
        sys.positions[None, :].copy(),
        sys.colours[None, :].copy(),
        sys.same_colour_clock[None, :].copy(),
        sys.threshold[None, :].copy(),
        np.array([sys.L_eq]),
        np.array([sys.L_neq]),
        None,
        pair_list(sys.n_particles),
    )
    _step_batch(state, gamma, dt, eps_band, gens[0], gens[1])
    return ColouredParticleSystem(
        state.pos[0],
        state.col[0],
        state.clock[0],
        state.thresh[0],
        float(state.l_eq[0]),
        float(state.l_neq[0]),
        sys.t + dt,
    )


@dataclass(frozen=True)
class DualQuery:
    """A mixed-moment query: particle start positions/colours, the initial
    condition functions they read at the horizon, and the horizon itself."""

    positions: tuple[float, ...]
    colours: tuple[int, ...]
    u0: object
    v0: object
    t: float
    kind: str = "product-moment"

    def __post_init__(self) -> None:
        if len(self.positions) != len(self.colours) or not self.positions:
            raise ValueError("need matching, non-empty positions and colours")
        if any(c not in (1, 2) for c in self.colours):
            raise ValueError("colours must be 1 or 2")
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if self.kind not in ("product-moment", "interface-functional"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")


@dataclass(frozen=True)
class _DualRun:
    positions: tuple[float, ...]
    colours: tuple[int, ...]
    t: float
    gamma: float
    rho: float
    dt: float
    eps_band: float
    u0: object = None
    v0: object = None
    kind: str = "product-moment"
    start_jitter: float = 0.0
    record_first_switch: bool = False


def _simulate_dual_block(run: _DualRun, block: Block) -> dict:
    n = len(run.positions)
    B = block.count
    gen_p = RngStream(block.master_seed, block.index, TAG_PARTICLES).generator()
    gen_c = RngStream(block.master_seed, block.index, TAG_CLOCKS).generator()
    pos = np.tile(np.asarray(run.positions, dtype=np.float64), (B, 1))
    if run.start_jitter > 0.0:
        gen_s = RngStream(block.master_seed, block.index, TAG_STARTS).generator()
        pos += math.sqrt(run.start_jitter) * gen_s.standard_normal(pos.shape)
    col = np.tile(np.asarray(run.colours, dtype=np.int8), (B, 1))
    pairs = pair_list(n)
    state = _BatchState(
        pos,
        col,
        np.zeros((B, len(pairs))),
        _draw_thresholds(gen_c, run.gamma, (B, len(pairs))),
        np.zeros(B),
        np.zeros(B),
        np.full(B, np.nan) if run.record_first_switch else None,
        pairs,
    )
    n_steps = max(1, int(round(run.t / run.dt))) if run.t > 0 else 0
    dt_eff = run.t / n_steps if n_steps else run.dt
    for _ in range(n_steps):
        _step_batch(state, run.gamma, dt_eff, run.eps_band, gen_p, gen_c)

    out = {
        "positions": state.pos,
        "colours": state.col,
        "l_eq": state.l_eq,
        "l_neq": state.l_neq,
    }
    if run.record_first_switch:
        out["first_switch"] = state.first_switch
    log_weight = run.gamma * (state.l_eq + run.rho * state.l_neq)
    if run.kind == "interface-functional":
        pos1 = np.where(state.col == 1, state.pos, np.inf)
        pos2 = np.where(state.col == 2, state.pos, -np.inf)
        r_idx = np.argmin(pos1, axis=1)
        l_idx = np.argmax(pos2, axis=1)
        rows = np.arange(B)
        gap = np.maximum(state.pos[rows, r_idx] - state.pos[rows, l_idx], 0.0)
        out["values"] = gap * np.exp(log_weight)
    else:
        u_vals = np.asarray(run.u0(state.pos), dtype=np.float64)
        v_vals = np.asarray(run.v0(state.pos), dtype=np.float64)
        ic_prod = np.prod(np.where(state.col == 1, u_vals, v_vals), axis=1)
        out["values"] = ic_prod * np.exp(log_weight)
    return out


def _reliability_flags(values: np.ndarray, est_value: float, std_error: float) -> tuple[str, ...]:
    flags: list[str] = []
    if est_value != 0 and std_error > 0.5 * abs(est_value):
        flags.append("unreliable")
    mags = np.sort(np.abs(values))
    total = float(mags.sum())
    if total > 0:
        top = max(1, int(math.ceil(len(mags) / 100)))
        if float(mags[-top:].sum()) > 0.5 * total:
            flags.append("heavy-tail")
    return tuple(flags)


def moment_estimate(
    query: DualQuery,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dt: float = DEFAULT_DT,
    eps_band: float | None = None,
    workers: int | None = None,
) -> MomentEstimate:
    """Monte Carlo mixed-moment estimate via the coloured particle dual."""
    if rho > 0.0:
        warnings.warn(
            "rho > 0: exponential dual weights can be heavy-tailed; "
            "watch the reliability flags",
            RuntimeWarning,
            stacklevel=2,
        )
    eps = default_eps_band(dt) if eps_band is None else eps_band
    run = _DualRun(
        tuple(query.positions),
        tuple(query.colours),
        query.t,
        gamma,
        rho,
        dt,
        eps,
        u0=query.u0,
        v0=query.v0,
        kind=query.kind,
    )
    results = map_blocks(partial(_simulate_dual_block, run), make_blocks(n_replicas, seed, PARTICLE_BLOCK), workers)
    values = np.concatenate([r["values"] for r in results])
    est = MomentEstimate.from_samples(values)
    return replace(est, flags=_reliability_flags(values, est.value, est.std_error))


def moment_estimate_extrapolated(
    query: DualQuery,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dt: float = DEFAULT_DT,
    workers: int | None = None,
) -> tuple[MomentEstimate, dict]:
    """Estimate with the eps-band bias removed by Richardson extrapolation.

    Runs the band widths {4, 2, 1} * sqrt(dt) on common paths and linearly
    extrapolates per replica from the two finest; returns the extrapolated
    estimate plus the per-eps estimates for convergence reporting.
    """
    eps_levels = [4.0 * math.sqrt(dt), 2.0 * math.sqrt(dt), math.sqrt(dt)]
    per_eps: list[np.ndarray] = []
    for eps in eps_levels:
        run = _DualRun(
            tuple(query.positions),
            tuple(query.colours),
            query.t,
            gamma,
            rho,
            dt,
            eps,
            u0=query.u0,
            v0=query.v0,
            kind=query.kind,
        )
        results = map_blocks(
            partial(_simulate_dual_block, run), make_blocks(n_replicas, seed, PARTICLE_BLOCK), workers
        )
        per_eps.append(np.concatenate([r["values"] for r in results]))
    extrapolated = 2.0 * per_eps[2] - per_eps[1]
    est = MomentEstimate.from_samples(extrapolated)
    detail = {
        "eps_levels": eps_levels,
        "per_eps": [MomentEstimate.from_samples(v) for v in per_eps],
    }
    return replace(est, flags=_reliability_flags(extrapolated, est.value, est.std_error)), detail


def interface_functional_estimate(
    z: float,
    t: float,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dt: float = DEFAULT_DT,
    eps_band: float | None = None,
    workers: int | None = None,
) -> MomentEstimate:
    """Four-particle estimate of the z-shifted overlap-squared integral.

    Particles start at (0, 0, z, z) with colours (1, 2, 1, 2); the estimator
    averages the positive gap between the left-most colour-1 particle and the
    right-most colour-2 particle, weighted by the exponential local-time
    correction.
    """
    if z <= 0:
        raise ValueError("separation z must be > 0")
    query = DualQuery(
        positions=(0.0, 0.0, z, z),
        colours=(1, 2, 1, 2),
        u0=None,
        v0=None,
        t=t,
        kind="interface-functional",
    )
    eps = default_eps_band(dt) if eps_band is None else eps_band
    run = _DualRun(
        query.positions, query.colours, t, gamma, rho, dt, eps, kind=query.kind
    )
    results = map_blocks(partial(_simulate_dual_block, run), make_blocks(n_replicas, seed, PARTICLE_BLOCK), workers)
    values = np.concatenate([r["values"] for r in results])
    est = MomentEstimate.from_samples(values)
    return replace(est, flags=_reliability_flags(values, est.value, est.std_error))


def collision_laplace_oracle(s: float, z: float, t: float) -> float:
    """E[exp(-s * collision local time)] of two BMs started z apart.

    The collision local time equals (1/sqrt 2) times the positive part of the
    running maximum of a standard BM started at -|z|/sqrt(2); the expectation
    is a 1-D quadrature of the reflection-principle maximum density plus the
    atom at zero local time.
    """
    if s <= 0.0:
        raise ValueError("decay rate s must be > 0")
    if t <= 0.0:
        raise ValueError("horizon t must be > 0")
    d = abs(z) / math.sqrt(2.0)
    s_eff = s / math.sqrt(2.0)
    atom = max_cdf(d, t)

    def integrand(u: float) -> float:
        return math.exp(-s_eff * u) * float(max_density(d + u, t))

    tail, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-10)
    return float(atom + tail)


@dataclass(frozen=True)
class _TwoMotionRun:
    x: float
    y: float
    t: float
    gamma: float
    rho: float
    dt: float
    eps_band: float
    u0: object
    v0: object
    weight: str
    start_jitter: float


def _two_motion_block(run: _TwoMotionRun, block: Block) -> dict:
    B = block.count
    gen_p = RngStream(block.master_seed, block.index, TAG_PARTICLES).generator()
    pos = np.tile(np.array([run.x, run.y]), (B, 1))
    if run.start_jitter > 0.0:
        gen_s = RngStream(block.master_seed, block.index, TAG_STARTS).generator()
        pos += math.sqrt(run.start_jitter) * gen_s.standard_normal(pos.shape)
    n_steps = max(1, int(round(run.t / run.dt))) if run.t > 0 else 0
    dt_eff = run.t / n_steps if n_steps else run.dt
    inc = dt_eff / (2.0 * run.eps_band)
    lt = np.zeros(B)
    for _ in range(n_steps):
        pos += math.sqrt(dt_eff) * gen_p.standard_normal(pos.shape)
        lt += inc * (np.abs(pos[:, 0] - pos[:, 1]) <= run.eps_band)
    ic = np.asarray(run.u0(pos[:, 0]), dtype=np.float64) * np.asarray(
        run.v0(pos[:, 1]), dtype=np.float64
    )
    if run.weight == "exp":
        values = ic * np.exp(run.gamma * run.rho * lt)
    elif run.weight == "indicator":
        values = ic * (lt == 0.0)
    else:
        raise ValueError(f"unknown weight {run.weight!r}")
    return {"values": values, "positions": pos, "local_time": lt}


def two_motion_estimate(
    u0,
    v0,
    x: float,
    y: float,
    t: float,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dt: float = DEFAULT_DT,
    eps_band: float | None = None,
    weight: str = "exp",
    start_jitter: float = 0.0,
    workers: int | None = None,
) -> MomentEstimate:
    """Second-moment dual estimate that never touches colour logic.

    Averages u0(B1_t) v0(B2_t) exp(gamma rho L_t) over two plain Brownian
    motions from (x, y); with weight="indicator" the exponential is replaced
    by 1{L_t = 0}.  Serves as an independent code path against the coloured
    engine.
    """
    eps = default_eps_band(dt) if eps_band is None else eps_band
    run = _TwoMotionRun(x, y, t, gamma, rho, dt, eps, u0, v0, weight, start_jitter)
    results = map_blocks(partial(_two_motion_block, run), make_blocks(n_replicas, seed, PARTICLE_BLOCK), workers)
    values = np.concatenate([r["values"] for r in results])
    est = MomentEstimate.from_samples(values)
    return replace(est, flags=_reliability_flags(values, est.value, est.std_error))


@dataclass(frozen=True)
class _TwoMotionMultiRun:
    x: float
    y: float
    t: float
    gamma: float
    rho: float
    dt: float
    eps_bands: tuple[float, ...]
    u0: object
    v0: object


def _two_motion_multi_block(run: _TwoMotionMultiRun, block: Block) -> dict:
    B = block.count
    gen_p = RngStream(block.master_seed, block.index, TAG_PARTICLES).generator()
    pos = np.tile(np.array([run.x, run.y]), (B, 1))
    n_steps = max(1, int(round(run.t / run.dt))) if run.t > 0 else 0
    dt_eff = run.t / n_steps if n_steps else run.dt
    eps = np.asarray(run.eps_bands)
    incs = dt_eff / (2.0 * eps)
    lt = np.zeros((B, len(eps)))
    for _ in range(n_steps):
        pos += math.sqrt(dt_eff) * gen_p.standard_normal(pos.shape)
        dist = np.abs(pos[:, 0] - pos[:, 1])
        lt += incs[None, :] * (dist[:, None] <= eps[None, :])
    ic = np.asarray(run.u0(pos[:, 0]), dtype=np.float64) * np.asarray(
        run.v0(pos[:, 1]), dtype=np.float64
    )
    return {"weights": ic[:, None] * np.exp(run.gamma * run.rho * lt)}


def two_motion_extrapolated(
    u0,
    v0,
    x: float,
    y: float,
    t: float,
    gamma: float,
    rho: float,
    n_replicas: int,
    seed: int,
    dt: float = DEFAULT_DT,
    workers: int | None = None,
) -> tuple[MomentEstimate, dict]:
    """Colour-free second-moment dual with the eps-band bias extrapolated out.

    Band local times at widths {4, 2, 1} * sqrt(dt) are accumulated along the
    same paths; the estimate extrapolates linearly per replica from the two
    finest bands.
    """
    eps_levels = (4.0 * math.sqrt(dt), 2.0 * math.sqrt(dt), math.sqrt(dt))
    run = _TwoMotionMultiRun(x, y, t, gamma, rho, dt, eps_levels, u0, v0)
    results = map_blocks(
        partial(_two_motion_multi_block, run),
        make_blocks(n_replicas, seed, PARTICLE_BLOCK),
        workers,
    )
    weights = np.concatenate([r["weights"] for r in results], axis=0)
    extrapolated = 2.0 * weights[:, 2] - weights[:, 1]
    est = MomentEstimate.from_samples(extrapolated)
    detail = {
        "eps_levels": list(eps_levels),
        "per_eps": [MomentEstimate.from_samples(weights[:, k]) for k in range(3)],
    }
    return replace(est, flags=_reliability_flags(extrapolated, est.value, est.std_error)), detail


def collect_switch_clocks(
    gamma: float,
    t: float,
    n_replicas: int,
    seed: int,
    dt: float = 2.5e-4,
    eps_band: float | None = None,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Clock value at the first colour switch of a same-coloured pair from 0.

    Returns (first-switch clock or NaN, total pair local time) per replica,
    for testing the exponential switch law.
    """
    eps = default_eps_band(dt) if eps_band is None else eps_band
    run = _DualRun(
        (0.0, 0.0),
        (1, 1),
        t,
        gamma,
        0.0,
        dt,
        eps,
        u0=None,
        v0=None,
        kind="interface-functional",  # values unused; avoids needing ICs
        record_first_switch=True,
    )
    results = map_blocks(partial(_simulate_dual_block, run), make_blocks(n_replicas, seed, PARTICLE_BLOCK), workers)
    first = np.concatenate([r["first_switch"] for r in results])
    total = np.concatenate([r["l_eq"] + r["l_neq"] for r in results])
    return first, total
