"""Figure builders for the sbm result-file schemas.

Stateless functions of files: every plot kind reads one of the documented
CSV/JSON outputs of the simulator CLI and renders a diagnostic figure.  No
numerical work happens here beyond error-bar arithmetic.
"""
from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


class SchemaError(Exception):
    """Input file does not match the documented schema."""


INTERFACE_COLUMNS = ["replica", "t", "R", "L", "L_eps", "R_eps", "width"]
MOMENT_KEYS = {"op", "params", "T", "value", "std_error"}


def _read_csv(path: str, required: list[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}: empty CSV, nothing to plot") from exc
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}; found {list(frame.columns)}"
        )
    if frame.empty:
        raise SchemaError(f"{path}: no data rows")
    return frame


def _read_json(path: str):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc.msg})") from exc


def _verify_criteria(path: str) -> list[dict]:
    payload = _read_json(path)
    if not isinstance(payload, dict) or "criteria" not in payload:
        raise SchemaError(f"{path}: expected a verify report with a 'criteria' list")
    return payload["criteria"]


def plot_interface(paths: list[str], out: str) -> list[str]:
    """Approximate-interface endpoint trajectories per replica."""
    frames = [_read_csv(p, INTERFACE_COLUMNS) for p in paths]
    data = pd.concat(frames, ignore_index=True)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for _, group in data.groupby("replica"):
        g = group.sort_values("t")
        ax.plot(g["t"], g["L_eps"], color="tab:blue", alpha=0.35, lw=0.8)
        ax.plot(g["t"], g["R_eps"], color="tab:red", alpha=0.35, lw=0.8)
    mean = data.groupby("t")[["L_eps", "R_eps", "width"]].mean()
    ax.plot(mean.index, mean["L_eps"], color="tab:blue", lw=2, label="left endpoint (mean)")
    ax.plot(mean.index, mean["R_eps"], color="tab:red", lw=2, label="right endpoint (mean)")
    ax.set_xlabel("t")
    ax.set_ylabel("position")
    ax.set_title("approximate interface endpoints")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return ["L_eps", "R_eps"]


def plot_moments(paths: list[str], out: str) -> list[str]:
    """Moment estimates vs horizon with 95% confidence bands."""
    records: list[dict] = []
    for path in paths:
        payload = _read_json(path)
        if not isinstance(payload, list):
            raise SchemaError(f"{path}: expected a list of moment records")
        for rec in payload:
            if not MOMENT_KEYS.issubset(rec):
                raise SchemaError(
                    f"{path}: record keys {sorted(rec)} lack {sorted(MOMENT_KEYS - set(rec))}"
                )
            records.append(rec)
    if not records:
        raise SchemaError("no moment records found")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = []
    by_label: dict[str, list[dict]] = {}
    for rec in records:
        label = rec["op"]
        path_tag = rec["params"].get("path") if isinstance(rec["params"], dict) else None
        if path_tag:
            label = f"{label} ({path_tag})"
        by_label.setdefault(label, []).append(rec)
    for label, recs in sorted(by_label.items()):
        recs = sorted(recs, key=lambda r: r["T"])
        t = np.array([r["T"] for r in recs], dtype=float)
        v = np.array([r["value"] for r in recs], dtype=float)
        se = np.array([r["std_error"] for r in recs], dtype=float)
        (line,) = ax.plot(t, v, "o-", label=label)
        ax.fill_between(t, v - 1.96 * se, v + 1.96 * se, alpha=0.2, color=line.get_color())
        series.append(label)
    ax.set_xlabel("T")
    ax.set_ylabel("estimate")
    ax.set_title("moment estimates with 95% bands")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return series


def _estimate(value) -> tuple[float, float]:
    if isinstance(value, dict):
        v = value.get("value")
        if isinstance(v, list):  # complex estimates: plot the real part
            v = v[0]
        return float(v), float(value.get("std_error", 0.0))
    return float(value), 0.0


def plot_duality_scatter(paths: list[str], out: str) -> list[str]:
    """Field-side vs dual-side estimate pairs around the identity line."""
    pairs = []
    for path in paths:
        for crit in _verify_criteria(path):
            measured = crit.get("measured", {})
            if {"spde", "dual"} <= set(measured):
                a, a_se = _estimate(measured["spde"])
                b, b_se = _estimate(measured["dual"])
                pairs.append((crit["cid"], a, a_se, b, b_se))
            elif {"two_motion", "oracle"} <= set(measured):
                a, a_se = _estimate(measured["two_motion"])
                b, b_se = _estimate(measured["oracle"])
                pairs.append((crit["cid"], a, a_se, b, b_se))
    if not pairs:
        raise SchemaError("no paired (field, dual) estimates found in the reports")
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for cid, a, a_se, b, b_se in pairs:
        ax.errorbar(b, a, xerr=1.96 * b_se, yerr=1.96 * a_se, fmt="o", label=cid, capsize=3)
    lo = min(min(p[1] for p in pairs), min(p[3] for p in pairs))
    hi = max(max(p[1] for p in pairs), max(p[3] for p in pairs))
    pad = 0.1 * (hi - lo + 1e-12)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k--", lw=1, label="identity")
    ax.set_xlabel("dual estimate")
    ax.set_ylabel("field estimate")
    ax.set_title("duality cross-checks")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return [p[0] for p in pairs]


def plot_separation(paths: list[str], out: str) -> list[str]:
    """Smoothed-product decay curves in eps, one line per branching rate."""
    detail = None
    for path in paths:
        for crit in _verify_criteria(path):
            if crit.get("cid") == "separation-ceiling":
                detail = crit["measured"]["detail"]
    if detail is None:
        raise SchemaError("no separation-ceiling criterion found in the reports")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = []
    for gamma_label, entries in sorted(detail.items()):
        eps_vals, estimates, errs = [], [], []
        for key, entry in entries.items():
            eps, x = key.split(",")
            if float(x.split("=")[1]) != 0.0:
                continue
            eps_vals.append(float(eps.split("=")[1]))
            v, se = _estimate(entry["estimate"])
            estimates.append(v)
            errs.append(1.96 * se)
        order = np.argsort(eps_vals)
        eps_arr = np.array(eps_vals)[order]
        est_arr = np.array(estimates)[order]
        err_arr = np.array(errs)[order]
        ax.errorbar(eps_arr, est_arr, yerr=err_arr, fmt="o-", label=gamma_label, capsize=3)
        series.append(gamma_label)
    if not series:
        raise SchemaError("separation detail carried no x = 0 entries")
    ax.set_xlabel("smoothing eps")
    ax.set_ylabel("E[S_eps u * S_eps v](0)")
    ax.set_xscale("log")
    ax.set_title("separation of types: smoothed product decay")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return series


def plot_brownian(paths: list[str], out: str) -> list[str]:
    """Laplace-transform decay against its envelope from the brownian suite."""
    cases = None
    c_hat = None
    for path in paths:
        for crit in _verify_criteria(path):
            if crit.get("cid") == "laplace-bound":
                cases = crit["measured"]["cases"]
                c_hat = crit["measured"]["c_hat"]
    if not cases:
        raise SchemaError("no laplace-bound criterion found in the reports")
    t = np.array([c["t"] for c in cases], dtype=float)
    sampled = np.array([c["sampled"] for c in cases], dtype=float)
    se = np.array([c["sampled_se"] for c in cases], dtype=float)
    quad = np.array([c["quadrature"] for c in cases], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.errorbar(t, sampled, yerr=3 * se, fmt="o", label="exact-maximum sampling", capsize=3)
    ax.plot(t, quad, "s--", label="quadrature")
    grid = np.geomspace(t.min(), t.max(), 100)
    ax.plot(grid, c_hat * np.minimum(1.0, grid**-0.5), "k:", label="C (1 and t^-1/2)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("E[exp(-s L_t)]")
    ax.set_title("local-time Laplace transform vs envelope")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return ["sampled", "quadrature", "envelope"]


PLOTTERS = {
    "interface": plot_interface,
    "moments": plot_moments,
    "duality-scatter": plot_duality_scatter,
    "separation": plot_separation,
    "brownian": plot_brownian,
}
