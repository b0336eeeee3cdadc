"""Diagnostic figures rendered to files alongside the CSV reports."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "fig_phase_portrait",
    "fig_curvature",
    "fig_prefactor",
    "fig_entropy",
    "fig_marginal",
    "fig_clt",
    "fig_transverse",
    "fig_slopes",
]


def _save(fig, out_dir, name):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_phase_portrait(samples, out_dir, name="cycle_phase_portrait.png"):
    fig, ax = plt.subplots(figsize=(5, 5))
    if samples.dim == 2:
        pts = np.vstack([samples.states, samples.states[:1]])
        ax.plot(pts[:, 0], pts[:, 1], "b-", lw=1.2)
        k = samples.N // 16
        ax.quiver(samples.states[::k, 0], samples.states[::k, 1],
                  samples.drifts[::k, 0], samples.drifts[::k, 1],
                  color="r", width=0.004, alpha=0.7)
        ax.set_xlabel("x_0")
        ax.set_ylabel("x_1")
    else:
        ax.plot(samples.times, samples.states)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
    ax.set_title(f"limit cycle, T = {samples.period:.6f}")
    return _save(fig, out_dir, name)


def fig_curvature(curvature, out_dir, name="cycle_curvature.png"):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    r = curvature.K_tilde.shape[1]
    for i in range(r):
        for j in range(i, r):
            ax1.plot(curvature.times, curvature.K_tilde[:, i, j],
                     label=f"Ktilde[{i},{j}]")
    ax1.legend(fontsize=8)
    ax1.set_ylabel("transverse curvature")
    ax2.plot(curvature.times, curvature.v, "k-")
    ax2.set_ylabel("v = det Ktilde^-1")
    ax2.set_xlabel("t")
    return _save(fig, out_dir, name)


def fig_prefactor(prefactor, out_dir, name="cycle_prefactor.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(prefactor.times, prefactor.log_omega, "b-")
    ax.set_xlabel("t")
    ax.set_ylabel("log prefactor")
    return _save(fig, out_dir, name)


def fig_entropy(report, out_dir, name="cycle_entropy.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(report.times, report.expr1, "b-", label="div flux")
    ax.plot(report.times, report.expr2, "r--", label="-d log w/dt")
    ax.plot(report.times, report.expr3, "g:", label="speed + variance parts")
    ax.legend(fontsize=8)
    ax.set_xlabel("t")
    ax.set_ylabel("local entropy rate")
    return _save(fig, out_dir, name)


def fig_marginal(comparison, out_dir, name="cycle_marginal.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    mids = (comparison.bin_edges[:-1] + comparison.bin_edges[1:]) / 2
    width = np.diff(comparison.bin_edges)
    ax.bar(mids, comparison.empirical, width=width, alpha=0.5, label="ensemble")
    ax.step(mids, comparison.predicted, "r-", where="mid", label="predicted")
    ax.set_xlabel("arclength")
    ax.set_ylabel("bin probability")
    ax.legend(fontsize=8)
    ax.set_title(f"KS distance {comparison.ks_distance:.4f}")
    return _save(fig, out_dir, name)


def fig_clt(report, out_dir, name="clt_check.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    n = report.empirical.shape[1]
    for i in range(n):
        for j in range(i, n):
            ax.plot(report.times, report.z[:, i, j], ".-", ms=3,
                    label=f"z[{i},{j}]")
    ax.axhline(3.0, color="k", lw=0.8, ls="--")
    ax.axhline(-3.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("covariance z-score")
    ax.legend(fontsize=7)
    ax.set_title(f"fraction |z|<3: {report.fraction_within_3:.3f}")
    return _save(fig, out_dir, name)


def fig_transverse(report, out_dir, name="transverse_check.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    mids = (report.bin_edges[:-1] + report.bin_edges[1:]) / 2
    r = report.empirical.shape[1]
    for i in range(r):
        ax.errorbar(mids, report.empirical[:, i, i],
                    yerr=3 * np.abs(report.empirical[:, i, i] - report.theory[:, i, i])
                    / np.maximum(np.abs(report.z[:, i, i]), 1e-12),
                    fmt=".", ms=4, label=f"empirical[{i},{i}]")
        ax.plot(mids, report.theory[:, i, i], "r-", lw=1, label=f"theory[{i},{i}]")
    ax.set_xlabel("phase t")
    ax.set_ylabel("transverse variance")
    ax.legend(fontsize=7)
    ax.set_title(f"bins within 3 SE: {report.fraction_bins_ok:.3f}")
    return _save(fig, out_dir, name)


def fig_slopes(records, out_dir, name="laplace_slopes.png"):
    """Log-log error vs eps, one line per (quantity, case)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    series = {}
    for r in records:
        series.setdefault((r["quantity"], r["case"]), []).append(
            (r["eps"], r["abs_error"])
        )
    for (quantity, case), pts in sorted(series.items()):
        pts = sorted(pts)
        eps = [p[0] for p in pts]
        err = [max(p[1], 1e-18) for p in pts]
        ax.loglog(eps, err, ".-", lw=0.8, ms=3,
                  label=f"{quantity}/{case}" if case == 0 else None)
    ax.set_xlabel("eps")
    ax.set_ylabel("|expansion - quadrature|")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    return _save(fig, out_dir, name)
