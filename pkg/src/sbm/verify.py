"""Acceptance suites: every quantitative claim as a machine-checkable verdict.

Each criterion produces measured values, its tolerance, and a three-way
verdict: "pass", "fail", or "inconclusive" when the Monte Carlo intervals are
too wide to decide either way.  Defaults (seeds, replica counts, resolutions)
are fixed here so a default run is reproducible byte for byte.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__, dual, interface, moments, selfdual, spde
from .brownian import (
    collision_tail_check,
    laplace_bound_check,
    levy_identity_check,
    local_time_tail_check,
    occupation_formula_check,
)
from .core import (
    FieldPair,
    GridSpec,
    ModelParams,
    MomentEstimate,
    RngStream,
    combined_std_error,
    derive_seed,
    grid_for_horizon,
    make_heaviside_ic,
)
from .funcs import Constant, GaussianBump, HeavisideLeft, HeavisideRight, heat_step_solution

DEFAULT_SEED = 20260809

E = math.e


@dataclass(frozen=True)
class CriterionResult:
    cid: str
    description: str
    measured: dict
    tolerance: dict
    verdict: str


def _est(e: MomentEstimate) -> dict:
    value = e.value
    if isinstance(value, complex):
        value = [value.real, value.imag]
    d = {"value": value, "std_error": e.std_error, "n_replicas": e.n_replicas}
    if e.flags:
        d["flags"] = list(e.flags)
    return d


def _passfail(ok: bool) -> str:
    return "pass" if ok else "fail"


@dataclass(frozen=True)
class _ExpSquareTimesS:
    """Bounded test integrand h(z, s) = exp(-z^2) * s."""

    def __call__(self, z, s):
        return np.exp(-np.asarray(z) ** 2) * s


def crit_heat(seed: int, n: int | None, workers) -> list[CriterionResult]:
    dx = 0.05
    grid = GridSpec(-6.0, 6.0, 240)
    params = ModelParams(0.0, 0.0, dx * dx / 4.0, grid)
    traj, lam, _ = spde.simulate(make_heaviside_ic(grid), 1.0, params, RngStream(seed, 0), (1.0,))
    u_T = traj.snapshots[-1][1].u
    v_T = traj.snapshots[-1][1].v
    x = grid.centers()
    err_u = float(np.max(np.abs(u_T - heat_step_solution(x, 1.0))))
    err_v = float(np.max(np.abs(v_T - heat_step_solution(-x, 1.0))))
    err = max(err_u, err_v)
    return [
        CriterionResult(
            "heat-oracle",
            "gamma = 0 step evolution matches the closed-form heat profile",
            {"sup_error": err, "lambda_max": float(np.max(lam.values))},
            {"sup_error": 2.0 * dx},
            _passfail(err <= 2.0 * dx and float(np.max(lam.values)) == 0.0),
        )
    ]


def crit_duality(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 4000
    rho, gamma, T, dx = -0.8, 1.0, 0.5, 0.05
    grid = grid_for_horizon(T, gamma, dx)
    params = ModelParams(rho, gamma, dx * dx / 4.0, grid)
    pairs_xy = [(0.0, 0.0), (-0.5, 0.5)]
    functional = moments._MultiPointFunctional(
        tuple((grid.nearest_cell(x), grid.nearest_cell(y)) for x, y in pairs_xy)
    )
    res = spde.run_ensemble(
        make_heaviside_ic(grid), T, params, n, derive_seed(seed, "c2-spde"), (T,),
        functional, workers=workers,
    )
    out = []
    for idx, (x, y) in enumerate(pairs_xy):
        a = MomentEstimate.from_samples(np.concatenate([r[f"uv_{idx}"][-1] for r in res]))
        b = dual.two_motion_estimate(
            HeavisideLeft(), HeavisideRight(), x, y, T, gamma, rho, n,
            derive_seed(seed, f"c2-dual-{idx}"), dt=2.5e-4, workers=workers,
        )
        diff = abs(a.value - b.value)
        stat = 3.0 * combined_std_error(a.std_error, b.std_error)
        tol = stat + 4.0 * dx
        scale = max(abs(a.value), abs(b.value))
        if diff <= tol:
            verdict = "pass"
        elif stat > 0.5 * scale:
            verdict = "inconclusive"
        else:
            verdict = "fail"
        out.append(
            CriterionResult(
                f"second-moment-duality-({x},{y})",
                "field-side E[u v] agrees with the two-motion dual",
                {"spde": _est(a), "dual": _est(b), "difference": diff},
                {"difference": tol},
                verdict,
            )
        )
    return out


def crit_laplace_oracle(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n_two = n or 16000
    n_col = min(n_two, 4000)
    one = Constant(1.0)
    out = []
    for i, (s, z, t, dt) in enumerate([(0.5, 0.0, 1.0, 5e-5), (0.8, 1.0, 1.0, 5e-5), (0.8, 0.0, 4.0, 1e-4)]):
        oracle = dual.collision_laplace_oracle(s, z, t)
        two, _ = dual.two_motion_extrapolated(
            one, one, 0.0, z, t, 1.0, -s, n_two, derive_seed(seed, f"c3-two-{i}"),
            dt=dt, workers=workers,
        )
        col, _ = dual.moment_estimate_extrapolated(
            dual.DualQuery((0.0, z), (1, 2), one, one, t), 1.0, -s, n_col,
            derive_seed(seed, f"c3-col-{i}"), dt=dt, workers=workers,
        )
        ok_two = abs(two.value - oracle) <= 3.0 * two.std_error
        ok_col = abs(col.value - oracle) <= 3.0 * col.std_error
        out.append(
            CriterionResult(
                f"local-time-oracle-(s={s},z={z},t={t})",
                "extrapolated eps-band dual weight matches the quadrature oracle",
                {
                    "oracle": oracle,
                    "two_motion": _est(two),
                    "coloured": _est(col),
                },
                {"two_motion": 3.0 * two.std_error, "coloured": 3.0 * col.std_error},
                _passfail(ok_two and ok_col),
            )
        )
    return out


def crit_martingale(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 4000
    rho, gamma, T, dx = -0.8, 1.0, 0.5, 0.05
    grid = grid_for_horizon(T, gamma, dx)
    params = ModelParams(rho, gamma, dx * dx / 4.0, grid)
    bumps = [
        GaussianBump(-1.0, 0.5),
        GaussianBump(-0.5, 0.75),
        GaussianBump(0.0, 0.35),
        GaussianBump(0.5, 0.6),
        GaussianBump(1.0, 0.45),
    ]
    # flat initial data: no interface, so the clamp corrections that bias the
    # step-IC pairings are absent and the martingale structure is clean
    from .core import make_constant_ic

    reports = spde.martingale_check(
        bumps, T, params, n, derive_seed(seed, "c4"), ic=make_constant_ic(grid), workers=workers
    )
    worst_z = 0.0
    ratios = []
    rho_hats = []
    for r in reports:
        for est in (r.mean_M, r.mean_N):
            if est.std_error > 0:
                worst_z = max(worst_z, abs(est.value) / est.std_error)
        ratios.append((r.var_ratio, r.var_ratio_se))
        rho_hats.append(r.rho_hat)
    ratio_ok = all(0.9 - 3.0 * se <= ratio <= 1.1 + 3.0 * se for ratio, se in ratios)
    rho_ok = all(abs(rh - rho) <= 0.1 for rh in rho_hats)
    return [
        CriterionResult(
            "martingale-zero-mean",
            "terminal martingales have zero mean for 5 test functions",
            {"worst_abs_z_score": worst_z},
            {"worst_abs_z_score": 3.0},
            _passfail(worst_z <= 3.0),
        ),
        CriterionResult(
            "martingale-variance",
            "Var[M_T] over the accumulated prediction stays within [0.9, 1.1]",
            {"var_ratios": [r for r, _ in ratios], "ratio_ses": [s for _, s in ratios]},
            {"band": [0.9, 1.1], "slack": "3 SE"},
            _passfail(ratio_ok),
        ),
        CriterionResult(
            "martingale-covariance",
            "cross-covariation ratio recovers the noise correlation",
            {"rho_hats": rho_hats, "rho": rho},
            {"abs_error": 0.1},
            _passfail(rho_ok),
        ),
    ]


def crit_selfdual(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 4000
    n_fine = max(n // 4, 250)
    rho, gamma, T = -0.8, 1.0, 0.5

    def run(dx, n_run, label):
        grid = grid_for_horizon(T, gamma, dx)
        params = ModelParams(rho, gamma, dx * dx / 4.0, grid)
        x = grid.centers()
        ic2 = FieldPair(GaussianBump(-1.0, 0.5)(x), GaussianBump(1.0, 0.5)(x))
        return selfdual.self_duality_check(
            make_heaviside_ic(grid), ic2, T, params, n_run, derive_seed(seed, label),
            workers=workers,
        )

    base = run(0.1, n, "c5-base")
    fine = run(0.05, n_fine, "c5-fine")
    residual_ok = fine.residual <= base.residual + 3.0 * combined_std_error(
        base.combined_se, fine.combined_se
    )
    return [
        CriterionResult(
            "self-duality",
            "E[F(u_T, v_T, ic2)] equals E[F(ic1, u~_T, v~_T)] across ensembles",
            {"lhs": _est(base.lhs), "rhs": _est(base.rhs), "residual": base.residual},
            {"residual": 3.0 * base.combined_se + base.allowance},
            _passfail(base.passed),
        ),
        CriterionResult(
            "self-duality-refinement",
            "residual does not grow under one (dx, dt) halving",
            {"residual_coarse": base.residual, "residual_fine": fine.residual},
            {"slack": "3 combined SE"},
            _passfail(residual_ok and fine.passed),
        ),
    ]


def crit_scaling(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 2000
    report = selfdual.scaling_equivalence_check(
        4.0, 0.25, 0.5, -0.8, n, derive_seed(seed, "c6"), dx=0.1, workers=workers
    )
    measured = {
        c.name: {"a": _est(c.side_a), "b": _est(c.side_b), "difference": c.difference}
        for c in report.comparisons
    }
    return [
        CriterionResult(
            "scaling-equivalence",
            "K = 4 diffusive rescaling matches the K-times-rate system",
            measured,
            {c.name: c.tolerance for c in report.comparisons},
            _passfail(report.passed),
        )
    ]


def _no_significant_increase(report: moments.TrendReport) -> bool:
    """Absence-of-growth rule for uniform-boundedness probes.

    A genuine slow drift toward the uniform-in-time bound is expected at desk
    horizons, so "no significant increase" is the stated disjunction: the
    Mann-Kendall test does not reject at 0.05, or consecutive confidence
    intervals overlap.
    """
    return report.mk_p_value > 0.05 or report.classification != "increasing"


def _trend_verdict(report: moments.TrendReport, expected: str) -> str:
    cls = report.classification
    if cls == expected:
        return "pass"
    if expected == "increasing":
        vals = [e.value for e in report.estimates]
        ses = [e.std_error for e in report.estimates]
        span = max(vals) - min(vals)
        if span <= 0 or 1.96 * float(np.mean(ses)) > 0.5 * span:
            return "inconclusive"
    return "fail"


def crit_curve(seed: int, n: int | None, workers) -> list[CriterionResult]:
    """Boundedness dichotomy of the second moment across the critical curve.

    Below the curve (rho = -0.5 < 0) the probe must show no significant
    increase in the stated sense and stay below the closed ceiling
    1 + 1/|rho| that the two-particle dual puts on E[u_t(0)^2] uniformly in
    t; above the curve (rho = +0.5) both estimator paths must be strictly
    increasing beyond 95% intervals.
    """
    n = n or 800
    out = []
    for rho, expected in ((-0.5, "flat"), (0.5, "increasing")):
        probe = moments.boundedness_probe(
            2, rho, 1.0, [1.0, 2.0, 4.0], n, derive_seed(seed, f"c7-{rho}"), workers=workers
        )
        measured = {
            "spde": [_est(e) for e in probe.spde.estimates],
            "spde_classification": probe.spde.classification,
            "dual": [_est(e) for e in probe.dual.estimates],
            "dual_classification": probe.dual.classification,
            "mk_p_spde": probe.spde.mk_p_value,
            "mk_p_dual": probe.dual.mk_p_value,
        }
        if expected == "flat":
            ceiling = 1.0 + 1.0 / abs(rho)
            below = all(
                e.value <= ceiling + 3.0 * e.std_error
                for rep in (probe.spde, probe.dual)
                for e in rep.estimates
            )
            no_growth = all(
                _no_significant_increase(rep) for rep in (probe.spde, probe.dual)
            )
            measured["uniform_ceiling"] = ceiling
            verdict = _passfail(below and no_growth)
            tolerance = {
                "rule": "no significant increase (MK p > 0.05 or CI overlap)",
                "uniform_ceiling": f"max estimate <= {ceiling} + 3 SE",
            }
        else:
            verdicts = [
                _trend_verdict(probe.spde, "increasing"),
                _trend_verdict(probe.dual, "increasing"),
            ]
            if all(v == "pass" for v in verdicts):
                verdict = "pass"
            elif "fail" in verdicts:
                verdict = "fail"
            else:
                verdict = "inconclusive"
            tolerance = {"rule": "strictly increasing beyond 95% CIs on both paths"}
        out.append(
            CriterionResult(
                f"critical-curve-p2-rho{rho:+}",
                f"second moment under flat initial data should be {expected}",
                measured,
                tolerance,
                verdict,
            )
        )
    return out


def crit_interface(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n_trend = n or 600
    rho, gamma = -0.8, 1.0
    grid = grid_for_horizon(4.0, gamma, 0.05)
    params = ModelParams(rho, gamma, 0.05 * 0.05 / 4.0, grid)
    horizons = [1.0, 2.0, 4.0]

    fourth = moments.integrated_fourth(
        horizons, params, n_trend, derive_seed(seed, "c8-fourth"), workers=workers
    )
    fourth_report = moments.trend_report(fourth, horizons)
    widths = interface.width_moment(
        horizons, 0.05, 0.5, params, n_trend, derive_seed(seed, "c8-width"), workers=workers
    )
    width_report = moments.trend_report(widths, horizons)

    n_cross = n or 1500
    n_cross_dual = 4 * n_cross
    grid_f = grid_for_horizon(1.0, gamma, 0.05)
    params_f = ModelParams(rho, gamma, 0.05 * 0.05 / 4.0, grid_f)
    z_list = [0.5, 1.0]
    shifted = moments.integrated_fourth_shifted(
        z_list, 1.0, params_f, n_cross, derive_seed(seed, "c8-shift"), workers=workers
    )
    cross = []
    for idx, z in enumerate(z_list):
        d = dual.interface_functional_estimate(
            z, 1.0, gamma, rho, n_cross_dual, derive_seed(seed, f"c8-dual-{idx}"),
            dt=2.5e-4, workers=workers,
        )
        diff = abs(shifted[idx].value - d.value)
        tol = 3.0 * combined_std_error(shifted[idx].std_error, d.std_error)
        cross.append((z, shifted[idx], d, diff, tol))

    return [
        CriterionResult(
            "fourth-moment-trend",
            "E[(overlap integral)^2] shows no significant increase over T",
            {
                "estimates": [_est(e) for e in fourth],
                "classification": fourth_report.classification,
                "mk_p": fourth_report.mk_p_value,
            },
            {"rule": "Mann-Kendall p > 0.05 or consecutive 95% CIs overlap"},
            _passfail(_no_significant_increase(fourth_report)),
        ),
        CriterionResult(
            "width-moment-trend",
            "E[width^0.5] shows no significant increase over T",
            {
                "estimates": [_est(e) for e in widths],
                "classification": width_report.classification,
                "mk_p": width_report.mk_p_value,
            },
            {"rule": "Mann-Kendall p > 0.05 or consecutive 95% CIs overlap"},
            _passfail(_no_significant_increase(width_report)),
        ),
    ] + [
        CriterionResult(
            f"interface-functional-z{z}",
            "four-particle dual matches the z-shifted overlap moment",
            {"spde": _est(s), "dual": _est(d), "difference": diff},
            {"difference": tol},
            _passfail(diff <= tol),
        )
        for z, s, d, diff, tol in cross
    ]


def crit_separation(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 1000
    eps_list = (0.4, 0.2, 0.1, 0.05)
    x_list = (-0.5, 0.0, 0.5)
    T, rho = 0.5, -0.8
    gammas = (1.0, 4.0, 16.0)
    reports = {}
    for g in gammas:
        grid = grid_for_horizon(T, g, 0.05)
        params = ModelParams(rho, g, 0.05 * 0.05 / 4.0, grid)
        reports[g] = selfdual.separation_probe(
            eps_list, x_list, T, params, n, derive_seed(seed, f"c9-{g}"), workers=workers
        )

    ceiling_ok = True
    worst_excess = -math.inf
    for g in gammas:
        for e in reports[g].entries:
            excess = e.estimate.value - e.ceiling - 3.0 * e.estimate.std_error
            worst_excess = max(worst_excess, excess)
            ceiling_ok = ceiling_ok and excess <= 0.0

    def monotone(values, ses) -> bool:
        steps_ok = all(
            values[i + 1] <= values[i] + 2.0 * combined_std_error(ses[i], ses[i + 1])
            for i in range(len(values) - 1)
        )
        overall = values[-1] <= values[0] - 2.0 * combined_std_error(ses[0], ses[-1])
        return steps_ok and overall

    eps_ok = True
    for g in gammas:
        vals = [reports[g].entry(eps, 0.0).estimate.value for eps in eps_list]
        ses = [reports[g].entry(eps, 0.0).estimate.std_error for eps in eps_list]
        eps_ok = eps_ok and monotone(vals, ses)
    gamma_ok = True
    for eps in eps_list:
        vals = [reports[g].entry(eps, 0.0).estimate.value for g in gammas]
        ses = [reports[g].entry(eps, 0.0).estimate.std_error for g in gammas]
        gamma_ok = gamma_ok and monotone(vals, ses)

    measured = {
        f"gamma={g}": {
            f"eps={e.eps},x={e.x}": {
                "estimate": _est(e.estimate),
                "dual_indicator_bound": _est(e.dual_indicator_bound),
                "ceiling": e.ceiling,
            }
            for e in reports[g].entries
        }
        for g in gammas
    }
    return [
        CriterionResult(
            "separation-ceiling",
            "smoothed-product estimates stay below the heat ceiling",
            {"worst_excess": worst_excess, "detail": measured},
            {"worst_excess": 0.0},
            _passfail(ceiling_ok),
        ),
        CriterionResult(
            "separation-monotone",
            "smoothed product decreases in eps and in gamma at x = 0",
            {
                "x0_values": {
                    f"gamma={g}": [reports[g].entry(eps, 0.0).estimate.value for eps in eps_list]
                    for g in gammas
                }
            },
            {"monotone": "non-increasing with significant overall drop"},
            _passfail(eps_ok and gamma_ok),
        ),
    ]


def crit_brownian(seed: int, n: int | None, workers) -> list[CriterionResult]:
    n = n or 20000
    out = []
    levy_ok = True
    levy_measured = {}
    for i, (z, t) in enumerate([(0.0, 1.0), (1.0, 1.0)]):
        rep = levy_identity_check(z, t, n, 1e-4, 0.02, derive_seed(seed, f"c10-levy-{i}"))
        levy_measured[f"z={z},t={t}"] = asdict(rep)
        levy_ok = levy_ok and rep.passed
    out.append(
        CriterionResult(
            "levy-identity",
            "band local time matches the maximum representation in law (KS)",
            levy_measured,
            {"p_value": 0.01},
            _passfail(levy_ok),
        )
    )

    tails_ok = True
    worst_margin = -math.inf
    k = 0
    for z in (0.0, 1.0, 2.0):
        for alpha in (0.5, 1.0, 2.0):
            for t in (E, E**2, E**4):
                rep = local_time_tail_check(z, alpha, t, n, derive_seed(seed, f"c10-tail-{k}"))
                crep = collision_tail_check(
                    0.0, z, alpha, t, n, derive_seed(seed, f"c10-ctail-{k}")
                )
                for r in (rep, crep):
                    margin = r.empirical_p - r.bound - 3.0 * r.std_error
                    worst_margin = max(worst_margin, margin)
                    tails_ok = tails_ok and r.passed
                k += 1
    out.append(
        CriterionResult(
            "local-time-tail-bounds",
            "small-local-time probabilities never exceed their bounds",
            {"worst_excess": worst_margin, "grid": "z x alpha x t = 3 x 3 x 3"},
            {"worst_excess": 0.0},
            _passfail(tails_ok),
        )
    )

    occ = occupation_formula_check(
        _ExpSquareTimesS(), 1.0, 1e-4, 0.02, min(n, 2000), derive_seed(seed, "c10-occ")
    )
    out.append(
        CriterionResult(
            "occupation-formula",
            "time integral equals the level integral of band local times",
            asdict(occ),
            {"rel_err": 0.05},
            _passfail(occ.passed),
        )
    )

    lap = laplace_bound_check(1.0, [1.0, 4.0, 16.0, 64.0], n, derive_seed(seed, "c10-lap"))
    out.append(
        CriterionResult(
            "laplace-bound",
            "exact-sampled Laplace transform matches quadrature and the decay envelope",
            {"c_hat": lap.c_hat, "cases": [asdict(c) for c in lap.cases]},
            {"agreement": "3 SE"},
            _passfail(lap.passed),
        )
    )
    return out


SUITES: dict[str, list] = {
    "heat": [crit_heat],
    "duality": [crit_duality, crit_laplace_oracle],
    "martingale": [crit_martingale],
    "interface": [crit_interface],
    "curve": [crit_curve],
    "selfdual": [crit_selfdual, crit_separation],
    "scaling": [crit_scaling],
    "brownian": [crit_brownian],
}

SUITE_ORDER = ["heat", "duality", "martingale", "interface", "curve", "selfdual", "scaling", "brownian"]


def run_suite(
    suite: str,
    seed: int = DEFAULT_SEED,
    replicas: int | None = None,
    workers: int | None = None,
) -> dict:
    """Run one named suite (or "all") and return the JSON-ready report."""
    if suite == "all":
        names = SUITE_ORDER
    elif suite in SUITES:
        names = [suite]
    else:
        raise ValueError(f"unknown suite {suite!r}; known: {', '.join(SUITE_ORDER + ['all'])}")
    criteria: list[CriterionResult] = []
    for name in names:
        for fn in SUITES[name]:
            criteria.extend(fn(seed, replicas, workers))
    summary = {"pass": 0, "fail": 0, "inconclusive": 0}
    for c in criteria:
        summary[c.verdict] += 1
    return {
        "suite": suite,
        "seed": seed,
        "replicas_override": replicas,
        "package_version": __version__,
        "criteria": [asdict(c) for c in criteria],
        "summary": summary,
    }
