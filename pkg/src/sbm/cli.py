"""Experiment configuration, orchestration, and result persistence.

``sbm run config.json`` executes one experiment described by a JSON config
and writes results.csv / results.json plus a manifest.json capturing the
fully resolved configuration; re-running from the manifest reproduces the
result files byte for byte.  ``sbm verify <suite>`` runs an acceptance suite
and exits 0 on success, 2 on a failed criterion, 1 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, dual, interface, moments, selfdual, spde, verify
from .core import (
    FieldPair,
    GridSpec,
    ModelParams,
    RngStream,
    make_constant_ic,
    make_heaviside_ic,
)
from .funcs import Constant, GaussianBump, HeavisideLeft, HeavisideRight
from .parallel import worker_count

EXPERIMENTS = (
    "simulate",
    "dual-moment",
    "interface",
    "moments",
    "self-duality",
    "scaling",
    "brownian",
    "verify",
)

IC_FUNCTIONS = {
    "heaviside-left": HeavisideLeft,
    "heaviside-right": HeavisideRight,
    "one": Constant,
}


class ConfigError(Exception):
    pass


def _need(cfg: dict, field: str, where: str = "top level"):
    if field not in cfg:
        raise ConfigError(f'missing required field "{field}" at {where}')
    return cfg[field]


def _params_from_config(cfg: dict) -> ModelParams:
    p = _need(cfg, "params")
    if not isinstance(p, dict):
        raise ConfigError('field "params" must be an object')
    rho = _need(p, "rho", "params")
    gamma = _need(p, "gamma", "params")
    x_min = _need(p, "x_min", "params")
    x_max = _need(p, "x_max", "params")
    n_cells = _need(p, "n_cells", "params")
    try:
        grid = GridSpec(float(x_min), float(x_max), int(n_cells))
        dt = float(p.get("dt", grid.dx * grid.dx / 4.0))
        return ModelParams(float(rho), float(gamma), dt, grid, p.get("boundary", "dirichlet-pinned-to-initial"))
    except ValueError as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def _resolved_params(params: ModelParams) -> dict:
    return {
        "rho": params.rho,
        "gamma": params.gamma,
        "dt": params.dt,
        "x_min": params.grid.x_min,
        "x_max": params.grid.x_max,
        "n_cells": params.grid.n_cells,
        "boundary": params.boundary,
    }


def _ic_from_name(name: str, grid: GridSpec) -> FieldPair:
    if name == "heaviside":
        return make_heaviside_ic(grid)
    if name == "one":
        return make_constant_ic(grid)
    raise ConfigError(f'unknown initial condition "{name}" (use "heaviside" or "one")')


def _ic_fn(name: str):
    if name not in IC_FUNCTIONS:
        raise ConfigError(f'unknown ic function "{name}" (use one of {sorted(IC_FUNCTIONS)})')
    return IC_FUNCTIONS[name]()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: str, resolved: dict, wall_clock: float) -> None:
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "config": resolved,
            "code_version": __version__,
            "wall_clock_s": wall_clock,
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    )


def _exp_simulate(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    params = _params_from_config(cfg)
    T = float(_need(cfg, "T"))
    record_times = [float(t) for t in cfg.get("record_times", [T])]
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    replica = int(cfg.get("replica", 0))
    ic = _ic_from_name(cfg.get("ic", "heaviside"), params.grid)
    traj, lam, clamp_fraction = spde.simulate(
        ic, T, params, RngStream(seed, replica), record_times
    )
    x = params.grid.centers()
    rows = []
    for (t, state), lam_values in zip(traj.snapshots, traj.lambda_snapshots):
        for i in range(params.grid.n_cells):
            rows.append((t, x[i], state.u[i], state.v[i], lam_values[i]))
    _write_csv(os.path.join(out_dir, "results.csv"), ["t", "x", "u", "v", "lambda"], rows)
    resolved = {
        "experiment": "simulate",
        "params": _resolved_params(params),
        "T": T,
        "record_times": record_times,
        "seed": seed,
        "replica": replica,
        "ic": cfg.get("ic", "heaviside"),
        "output_dir": out_dir,
    }
    _write_json(
        os.path.join(out_dir, "results.json"),
        {"clamp_fraction": clamp_fraction, "final_time": traj.snapshots[-1][0]},
    )
    return resolved, 0


def _exp_dual_moment(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    positions = tuple(float(x) for x in _need(cfg, "positions"))
    colours = tuple(int(c) for c in _need(cfg, "colours"))
    gamma = float(_need(cfg, "gamma"))
    rho = float(_need(cfg, "rho"))
    T = float(_need(cfg, "T"))
    kind = cfg.get("kind", "product-moment")
    dt = float(cfg.get("dt", dual.DEFAULT_DT))
    eps_band = cfg.get("eps_band")
    eps = float(eps_band) if eps_band is not None else dual.default_eps_band(dt)
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_replicas", 4000))
    u0_name = cfg.get("u0", "heaviside-left")
    v0_name = cfg.get("v0", "heaviside-right")
    query = dual.DualQuery(positions, colours, _ic_fn(u0_name), _ic_fn(v0_name), T, kind)
    if kind == "interface-functional":
        sep = positions[2] if len(positions) > 2 else 0.0
        est = dual.interface_functional_estimate(
            sep, T, gamma, rho, n, seed, dt=dt, eps_band=eps, workers=workers
        )
    else:
        est = dual.moment_estimate(query, gamma, rho, n, seed, dt=dt, eps_band=eps, workers=workers)
    record = {
        "query": {
            "positions": list(positions),
            "colours": list(colours),
            "u0": u0_name,
            "v0": v0_name,
            "t": T,
            "kind": kind,
            "gamma": gamma,
            "rho": rho,
        },
        "value": est.value,
        "std_error": est.std_error,
        "n_replicas": est.n_replicas,
        "flags": list(est.flags),
        "eps_band": eps,
        "dt": dt,
    }
    _write_json(os.path.join(out_dir, "results.json"), [record])
    resolved = {
        "experiment": "dual-moment",
        "positions": list(positions),
        "colours": list(colours),
        "gamma": gamma,
        "rho": rho,
        "T": T,
        "kind": kind,
        "dt": dt,
        "eps_band": eps,
        "u0": u0_name,
        "v0": v0_name,
        "seed": seed,
        "n_replicas": n,
        "output_dir": out_dir,
    }
    return resolved, 0


def _exp_interface(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    params = _params_from_config(cfg)
    T = float(_need(cfg, "T"))
    record_times = [float(t) for t in cfg.get("record_times", [T])]
    eps = float(cfg.get("eps", 0.05))
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_replicas", 100))
    ic = _ic_from_name(cfg.get("ic", "heaviside"), params.grid)
    rows = []
    for replica in range(n):
        traj, _, _ = spde.simulate(ic, T, params, RngStream(seed, replica), record_times)
        for t, state in traj.snapshots:
            stats = interface.approx_interface(state, params.grid, eps)
            rows.append((replica, t, stats.R, stats.L, stats.L_eps, stats.R_eps, stats.width))
    _write_csv(
        os.path.join(out_dir, "results.csv"),
        ["replica", "t", "R", "L", "L_eps", "R_eps", "width"],
        rows,
    )
    resolved = {
        "experiment": "interface",
        "params": _resolved_params(params),
        "T": T,
        "record_times": record_times,
        "eps": eps,
        "seed": seed,
        "n_replicas": n,
        "ic": cfg.get("ic", "heaviside"),
        "output_dir": out_dir,
    }
    return resolved, 0


def _exp_moments(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    op = _need(cfg, "op")
    params = _params_from_config(cfg)
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_replicas", 1000))
    T_list = [float(t) for t in cfg.get("T_list", [1.0])]
    records = []
    if op == "integrated-fourth":
        ests = moments.integrated_fourth(T_list, params, n, seed, workers=workers)
        trend = moments.trend_report(ests, T_list)
        for T, est in zip(T_list, ests):
            records.append(
                {
                    "op": op,
                    "params": _resolved_params(params),
                    "T": T,
                    "value": est.value,
                    "std_error": est.std_error,
                    "trend_verdict": trend.classification,
                }
            )
    elif op == "i-q":
        q = float(cfg.get("q", 0.5))
        ests = moments.i_q_moment(q, T_list, params, n, seed, workers=workers)
        trend = moments.trend_report(ests, T_list)
        for T, est in zip(T_list, ests):
            records.append(
                {
                    "op": op,
                    "params": {**_resolved_params(params), "q": q},
                    "T": T,
                    "value": est.value,
                    "std_error": est.std_error,
                    "trend_verdict": trend.classification,
                }
            )
    elif op == "boundedness":
        p = int(cfg.get("p", 2))
        report = moments.boundedness_probe(
            p, params.rho, params.gamma, T_list, n, seed, params=params, workers=workers
        )
        for T, est in zip(T_list, report.spde.estimates):
            records.append(
                {
                    "op": op,
                    "params": {**_resolved_params(params), "p": p, "path": "spde"},
                    "T": T,
                    "value": est.value,
                    "std_error": est.std_error,
                    "trend_verdict": report.spde.classification,
                }
            )
        for T, est in zip(T_list, report.dual.estimates):
            records.append(
                {
                    "op": op,
                    "params": {**_resolved_params(params), "p": p, "path": "dual"},
                    "T": T,
                    "value": est.value,
                    "std_error": est.std_error,
                    "trend_verdict": report.dual.classification,
                }
            )
    elif op == "mixed":
        points = [(float(x), str(k)) for x, k in _need(cfg, "points")]
        est = moments.spde_mixed_moment(points, T_list[-1], params, n, seed, workers=workers)
        records.append(
            {
                "op": op,
                "params": {**_resolved_params(params), "points": [[x, k] for x, k in points]},
                "T": T_list[-1],
                "value": est.value,
                "std_error": est.std_error,
                "trend_verdict": None,
            }
        )
    else:
        raise ConfigError(f'unknown moments op "{op}"')
    _write_json(os.path.join(out_dir, "results.json"), records)
    resolved = {
        "experiment": "moments",
        "op": op,
        "params": _resolved_params(params),
        "T_list": T_list,
        "seed": seed,
        "n_replicas": n,
        "output_dir": out_dir,
    }
    for key in ("q", "p", "points"):
        if key in cfg:
            resolved[key] = cfg[key]
    return resolved, 0


def _exp_self_duality(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    params = _params_from_config(cfg)
    T = float(_need(cfg, "T"))
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_replicas", 1000))
    centers = cfg.get("ic2_centers", [-1.0, 1.0])
    sigma = float(cfg.get("ic2_sigma", 0.5))
    x = params.grid.centers()
    ic2 = FieldPair(GaussianBump(centers[0], sigma)(x), GaussianBump(centers[1], sigma)(x))
    report = selfdual.self_duality_check(
        make_heaviside_ic(params.grid), ic2, T, params, n, seed, workers=workers
    )
    _write_json(
        os.path.join(out_dir, "results.json"),
        {
            "lhs": {"value": [report.lhs.value.real, report.lhs.value.imag], "std_error": report.lhs.std_error},
            "rhs": {"value": [report.rhs.value.real, report.rhs.value.imag], "std_error": report.rhs.std_error},
            "residual": report.residual,
            "combined_se": report.combined_se,
            "allowance": report.allowance,
            "pass": report.passed,
        },
    )
    resolved = {
        "experiment": "self-duality",
        "params": _resolved_params(params),
        "T": T,
        "seed": seed,
        "n_replicas": n,
        "ic2_centers": centers,
        "ic2_sigma": sigma,
        "output_dir": out_dir,
    }
    return resolved, 0


def _exp_scaling(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    K = float(_need(cfg, "K"))
    T = float(_need(cfg, "T"))
    gamma = float(_need(cfg, "gamma"))
    rho = float(_need(cfg, "rho"))
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_replicas", 1000))
    dx = float(cfg.get("dx", 0.1))
    report = selfdual.scaling_equivalence_check(K, T, gamma, rho, n, seed, dx=dx, workers=workers)
    _write_json(
        os.path.join(out_dir, "results.json"),
        {
            "K": K,
            "comparisons": [
                {
                    "name": c.name,
                    "a": c.side_a.value,
                    "b": c.side_b.value,
                    "difference": c.difference,
                    "tolerance": c.tolerance,
                    "pass": c.passed,
                }
                for c in report.comparisons
            ],
            "pass": report.passed,
        },
    )
    resolved = {
        "experiment": "scaling",
        "K": K,
        "T": T,
        "gamma": gamma,
        "rho": rho,
        "dx": dx,
        "seed": seed,
        "n_replicas": n,
        "output_dir": out_dir,
    }
    return resolved, 0


def _exp_brownian(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    from . import brownian

    check = _need(cfg, "check")
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    n = int(cfg.get("n_samples", 20000))
    if check == "levy":
        rep = brownian.levy_identity_check(
            float(cfg.get("z", 0.0)), float(cfg.get("t", 1.0)), n,
            float(cfg.get("dt", 1e-4)), float(cfg.get("eps_band", 0.02)), seed,
        )
    elif check == "tail":
        rep = brownian.local_time_tail_check(
            float(cfg.get("z", 0.0)), float(cfg.get("alpha", 1.0)),
            float(cfg.get("t", math.e)), n, seed,
        )
    elif check == "collision-tail":
        rep = brownian.collision_tail_check(
            float(cfg.get("x", 0.0)), float(cfg.get("y", 1.0)),
            float(cfg.get("alpha", 1.0)), float(cfg.get("t", math.e)), n, seed,
        )
    elif check == "occupation":
        rep = brownian.occupation_formula_check(
            verify._ExpSquareTimesS(), float(cfg.get("t", 1.0)),
            float(cfg.get("dt", 1e-4)), float(cfg.get("eps_band", 0.02)),
            min(n, 2000), seed,
        )
    elif check == "laplace":
        rep = brownian.laplace_bound_check(
            float(cfg.get("s", 1.0)), cfg.get("t_list", [1.0, 4.0, 16.0, 64.0]), n, seed
        )
    else:
        raise ConfigError(f'unknown brownian check "{check}"')
    _write_json(os.path.join(out_dir, "results.json"), {"check": check, "report": asdict(rep)})
    resolved = {"experiment": "brownian", "check": check, "seed": seed, "n_samples": n, "output_dir": out_dir}
    for key in ("z", "t", "alpha", "x", "y", "dt", "eps_band", "s", "t_list"):
        if key in cfg:
            resolved[key] = cfg[key]
    return resolved, 0


def _exp_verify(cfg: dict, out_dir: str, workers) -> tuple[dict, int]:
    suite = cfg.get("suite", "all")
    seed = int(cfg.get("seed", verify.DEFAULT_SEED))
    replicas = cfg.get("n_replicas")
    replicas = int(replicas) if replicas is not None else None
    report = verify.run_suite(suite, seed, replicas, workers)
    _write_json(os.path.join(out_dir, "results.json"), report)
    resolved = {
        "experiment": "verify",
        "suite": suite,
        "seed": seed,
        "n_replicas": replicas,
        "output_dir": out_dir,
    }
    code = 2 if report["summary"]["fail"] else 0
    return resolved, code


_DISPATCH = {
    "simulate": _exp_simulate,
    "dual-moment": _exp_dual_moment,
    "interface": _exp_interface,
    "moments": _exp_moments,
    "self-duality": _exp_self_duality,
    "scaling": _exp_scaling,
    "brownian": _exp_brownian,
    "verify": _exp_verify,
}


def run(config_path: str, workers: int | None = None) -> int:
    """Execute the experiment described by a config (or manifest) file."""
    try:
        with open(config_path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"config error: {config_path}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    if "config" in cfg and "experiment" not in cfg:
        cfg = cfg["config"]  # manifest round-trip
    try:
        experiment = _need(cfg, "experiment")
        if experiment not in _DISPATCH:
            raise ConfigError(
                f'unknown experiment "{experiment}" (known: {", ".join(EXPERIMENTS)})'
            )
        out_dir = cfg.get("output_dir", ".")
        os.makedirs(out_dir, exist_ok=True)
        started = time.monotonic()
        resolved, code = _DISPATCH[experiment](cfg, out_dir, workers)
        _write_manifest(out_dir, resolved, time.monotonic() - started)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sbm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config or manifest")
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument("--workers", type=int, default=None, help="replica worker processes")

    p_verify = sub.add_parser("verify", help="run an acceptance suite")
    p_verify.add_argument("suite", choices=verify.SUITE_ORDER + ["all"])
    p_verify.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
    p_verify.add_argument("--replicas", type=int, default=None)
    p_verify.add_argument("--out", default=".")
    p_verify.add_argument("--workers", type=int, default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.workers)
    if args.command == "verify":
        os.makedirs(args.out, exist_ok=True)
        started = time.monotonic()
        report = verify.run_suite(args.suite, args.seed, args.replicas, args.workers)
        _write_json(os.path.join(args.out, "results.json"), report)
        _write_manifest(
            args.out,
            {
                "experiment": "verify",
                "suite": args.suite,
                "seed": args.seed,
                "n_replicas": args.replicas,
                "output_dir": args.out,
            },
            time.monotonic() - started,
        )
        for c in report["criteria"]:
            print(f"[{c['verdict'].upper():>12}] {c['cid']}: {c['description']}")
        print(
            f"suite {args.suite}: {report['summary']['pass']} pass, "
            f"{report['summary']['fail']} fail, {report['summary']['inconclusive']} inconclusive"
        )
        return 2 if report["summary"]["fail"] else 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
