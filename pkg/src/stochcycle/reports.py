"""Machine-readable artifacts: round-trip CSV tables and a run manifest.

Floats are written with ``repr`` so the decimal text parses back to the
identical binary value; rerunning with the same config and seed therefore
yields byte-identical CSV bodies.  Wall-clock timestamps appear only in the
manifest, never in CSVs.
"""

import csv
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = [
    "fmt",
    "write_csv",
    "cycle_report_rows",
    "clt_report_rows",
    "transverse_report_rows",
    "marginal_report_rows",
    "laplace_report_rows",
    "scaling_report_rows",
    "validation_report_rows",
    "endpoint_rows",
    "write_manifest",
]


def fmt(x):
    """Round-trip text for one CSV cell."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def cycle_report_rows(samples, curvature, prefactor, conserved, marginal, entropy):
    n = samples.dim
    r = n - 1
    header = (
        ["time"]
        + [f"x_{i}" for i in range(n)]
        + ["speed"]
        + [f"ktilde_{i}{j}" for i in range(r) for j in range(r)]
        + ["v", "log_prefactor", "conserved_c", "marginal_g",
           "entropy_div_flux", "entropy_prefactor", "entropy_decomposed"]
    )
    rows = []
    speeds = samples.speeds
    for i in range(samples.N):
        row = [samples.times[i]]
        row += list(samples.states[i])
        row.append(speeds[i])
        row += list(curvature.K_tilde[i].ravel())
        row += [curvature.v[i], prefactor.log_omega[i], conserved.c[i],
                marginal.g[i], entropy.expr1[i], entropy.expr2[i],
                entropy.expr3[i]]
        rows.append(row)
    return header, rows


def clt_report_rows(report):
    header = ["time", "i", "j", "empirical", "theory", "se", "z"]
    rows = []
    n = report.empirical.shape[1]
    for g, t in enumerate(report.times):
        for i in range(n):
            for j in range(i, n):
                rows.append([t, i, j, report.empirical[g, i, j],
                             report.theory[g, i, j], report.se[g, i, j],
                             report.z[g, i, j]])
    return header, rows


def transverse_report_rows(report):
    header = ["bin", "t_lo", "t_hi", "count", "i", "j", "empirical", "theory", "z"]
    rows = []
    bins, r, _ = report.empirical.shape
    for k in range(bins):
        for i in range(r):
            for j in range(i, r):
                rows.append([k, report.bin_edges[k], report.bin_edges[k + 1],
                             int(report.counts[k]), i, j,
                             report.empirical[k, i, j], report.theory[k, i, j],
                             report.z[k, i, j]])
    return header, rows


def marginal_report_rows(comparison):
    header = ["bin", "s_lo", "s_hi", "count", "empirical", "predicted"]
    rows = []
    for k in range(len(comparison.counts)):
        rows.append([k, comparison.bin_edges[k], comparison.bin_edges[k + 1],
                     int(comparison.counts[k]), comparison.empirical[k],
                     comparison.predicted[k]])
    return header, rows


def laplace_report_rows(records):
    """records: iterable of dicts with quantity/case/eps/approx/oracle/error/slope."""
    header = ["quantity", "case", "eps", "approx", "oracle", "abs_error", "slope"]
    rows = [[r["quantity"], r["case"], r["eps"], r["approx"], r["oracle"],
             r["abs_error"], r["slope"]] for r in records]
    return header, rows


def scaling_report_rows(records):
    header = ["order_n", "k", "alpha", "beta", "eps", "eps_power",
              "max_drift_deviation", "eps_independent"]
    rows = [[r["order_n"], r["k"], r["alpha"], r["beta"], r["eps"],
             r["eps_power"], r["max_drift_deviation"], r["eps_independent"]]
            for r in records]
    return header, rows


def validation_report_rows(report):
    header = ["probe", "jacobian_error", "hessian_error"]
    rows = []
    for i in range(len(report.probes)):
        rows.append([i, report.jacobian_errors[i], report.hessian_errors[i]])
    return header, rows


def endpoint_rows(endpoints):
    n = endpoints.shape[1]
    header = ["trajectory"] + [f"x_{i}" for i in range(n)]
    rows = [[j] + list(endpoints[j]) for j in range(endpoints.shape[0])]
    return header, rows


def write_manifest(out_dir, config_raw, checks, artifacts, tolerances, seed=None,
                   extra=None):
    """Self-describing run record; the only artifact carrying timestamps."""
    import scipy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from . import __version__

    manifest = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "seed": seed,
        "config": config_raw,
        "tolerances": tolerances,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks) if checks else True,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path
