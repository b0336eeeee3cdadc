"""Command-line interface: validated configs in, CSV/JSON/figure artifacts out.

Subcommands: validate, cycle-report, clt-check, laplace-check, scaling,
describe.  Exit codes: 0 all selected checks passed, 1 a check failed,
2 configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clt, cycle, figures, flow, laplace, montecarlo, reports, scaling
from .config import ANALYSES, CYCLE_GUESSES, load_config
from .errors import CheckFailure, ConfigError, NumericalFailure
from .model import describe_builtin

__all__ = ["main", "run"]


def _out_dir(cfg, args):
    out = args.out if getattr(args, "out", None) else cfg.output["directory"]
    return Path(out)


def _check(name, passed, value, threshold):
    return {"name": name, "passed": bool(passed), "value": value,
            "threshold": threshold}


def _finish(out_dir, cfg_raw, checks, artifacts, tolerances, seed, as_json,
            analysis, extra=None):
    extra = dict(extra or {})
    extra.setdefault("analysis", analysis)
    manifest = reports.write_manifest(out_dir, cfg_raw, checks, artifacts,
                                      tolerances, seed=seed, extra=extra)
    artifacts = sorted(str(a) for a in artifacts) + [str(manifest)]
    failed = [c["name"] for c in checks if not c["passed"]]
    summary = {
        "analysis": analysis,
        "passed": not failed,
        "failed_checks": failed,
        "artifacts": artifacts,
    }
    if as_json:
        print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    else:
        for c in checks:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"[{status}] {c['name']}: {c['value']} (threshold {c['threshold']})")
        print(f"artifacts in {out_dir}")
    if failed:
        raise CheckFailure(f"checks failed: {', '.join(failed)}")
    return 0


# ---------------------------------------------------------------------------
# analyses


def _run_validate(cfg, args):
    out = _out_dir(cfg, args)
    model = cfg.model
    rng = np.random.default_rng(cfg.montecarlo["seed"])
    box = model.domain_box
    if box is not None:
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
        probes = [0.5 * (lo + hi)]
        probes += list(lo + (hi - lo) * rng.random((8, model.dim)))
    else:
        probes = [np.zeros(model.dim)] + list(rng.standard_normal((8, model.dim)))
    from .model import validate_model

    report = validate_model(model, probes)
    header, rows = reports.validation_report_rows(report)
    csv_path = reports.write_csv(out / "validation.csv", header, rows)
    checks = [
        _check("jacobian_consistency", report.jacobian_ok,
               report.max_jacobian_error, report.jacobian_tol),
        _check("hessian_consistency", report.hessian_ok,
               report.max_hessian_error, report.hessian_tol),
        _check("diffusion_psd", True, float(np.min(report.diffusion_eigenvalues)),
               0.0),
    ]
    tolerances = {"jacobian_tol": report.jacobian_tol,
                  "hessian_tol": report.hessian_tol}
    return _finish(out, cfg.raw, checks, [csv_path], tolerances,
                   cfg.montecarlo["seed"], args.json, "validate",
                   extra={"model": model.name})


def _find_cycle(cfg):
    model = cfg.model
    guess = cfg.cycle["x_guess"]
    if guess is None:
        guess = CYCLE_GUESSES.get(model.name)
    if guess is None:
        raise ConfigError(
            f"cycle.x_guess required for model '{model.name}' (no builtin default)"
        )
    opts = flow.CycleSearchOptions(
        transient_time=cfg.cycle["transient_time"],
        max_return_time=cfg.cycle["max_return_time"],
        cycle_tol=cfg.cycle["cycle_tol"],
    )
    lc = flow.find_limit_cycle(model, np.asarray(guess, dtype=float), opts)
    samples = flow.sample_cycle(lc, model, cfg.cycle["N"])
    return lc, samples


def _run_cycle_report(cfg, args):
    out = _out_dir(cfg, args)
    model = cfg.model
    lc, samples = _find_cycle(cfg)
    frame = cycle.build_frame(samples)
    curv = cycle.solve_periodic_covariance(
        samples, frame, periodicity_tol=cfg.cycle["periodicity_tol"]
    )
    pref = cycle.propagate_log_prefactor(samples, curv)
    cons = cycle.conserved_quantity(samples, curv, pref)
    marg = cycle.cycle_marginal_density(samples, curv, pref)
    ent = cycle.entropy_balance(samples, curv, pref)

    header, rows = reports.cycle_report_rows(samples, curv, pref, cons, marg, ent)
    artifacts = [reports.write_csv(out / "cycle_report.csv", header, rows)]
    if cfg.output["figures"]:
        artifacts.append(figures.fig_phase_portrait(samples, out))
        artifacts.append(figures.fig_curvature(curv, out))
        artifacts.append(figures.fig_prefactor(pref, out))
        artifacts.append(figures.fig_entropy(ent, out))

    kb = np.einsum("nij,nj->ni", curv.K, samples.drifts)
    tangency = float(np.max(
        np.linalg.norm(kb, axis=1)
        / (np.linalg.norm(curv.K, axis=(1, 2)) * samples.speeds)
    ))
    # relative agreement where the expressions have magnitude, absolute
    # where they vanish identically (symmetric cycles)
    ent_threshold = max(cfg.cycle["entropy_tol"] * ent.max_abs, 1e-6)
    checks = [
        _check("curvature_periodicity", curv.periodicity_defect < 1e-6,
               curv.periodicity_defect, 1e-6),
        _check("riccati_residual", curv.riccati_residual < cfg.cycle["residual_tol"],
               curv.riccati_residual, cfg.cycle["residual_tol"]),
        _check("curvature_tangency", tangency < 1e-6, tangency, 1e-6),
        _check("frame_skewness", frame.skew_defect < 5e-4, frame.skew_defect, 5e-4),
        _check("conserved_rel_std", cons.rel_std < cfg.cycle["constancy_tol"],
               cons.rel_std, cfg.cycle["constancy_tol"]),
        _check("entropy_pointwise", ent.max_pairwise_dev < ent_threshold,
               ent.max_pairwise_dev, ent_threshold),
        _check("entropy_period_average",
               max(abs(v) for v in ent.period_averages.values()) < 1e-6,
               max(abs(v) for v in ent.period_averages.values()), 1e-6),
    ]
    tolerances = {
        "cycle_tol": cfg.cycle["cycle_tol"],
        "periodicity_tol": cfg.cycle["periodicity_tol"],
        "residual_tol": cfg.cycle["residual_tol"],
        "entropy_tol": cfg.cycle["entropy_tol"],
        "constancy_tol": cfg.cycle["constancy_tol"],
        "tangency_tol": 1e-6,
    }
    extra = {
        "model": model.name,
        "period": lc.period,
        "anchor": list(lc.anchor),
        "N": samples.N,
        "riccati_periods_used": curv.periods_used,
    }
    return _finish(out, cfg.raw, checks, artifacts, tolerances, None,
                   args.json, "cycle-report", extra=extra)


def _run_clt_check(cfg, args):
    out = _out_dir(cfg, args)
    model = cfg.model
    seed = args.seed if args.seed is not None else cfg.montecarlo["seed"]
    x0 = cfg.clt["x0"]
    if x0 is None:
        x0 = CYCLE_GUESSES.get(model.name)
    if x0 is None:
        raise ConfigError(f"clt.x0 required for model '{model.name}'")
    x0 = np.asarray(x0, dtype=float)
    t1 = cfg.clt["t1"] if cfg.clt["t1"] is not None else 5.0
    grid = np.linspace(0.0, float(t1), cfg.clt["grid_points"])
    h = cfg.montecarlo["h"] if cfg.montecarlo["h"] is not None else t1 / 2000.0

    tube = clt.propagate_gaussian(model, x0, np.zeros(model.dim),
                                  np.zeros((model.dim, model.dim)), float(t1),
                                  t_eval=grid)
    stats = montecarlo.simulate_ensemble(
        model, cfg.epsilon, x0, grid, cfg.montecarlo["M"], h, seed,
        workers=cfg.montecarlo["workers"],
        keep_endpoints=cfg.montecarlo["dump_endpoints"],
    )
    report = montecarlo.clt_check(stats, tube)
    header, rows = reports.clt_report_rows(report)
    artifacts = [reports.write_csv(out / "clt_check.csv", header, rows)]
    if cfg.montecarlo["dump_endpoints"]:
        eh, er = reports.endpoint_rows(stats.endpoints)
        artifacts.append(reports.write_csv(out / "endpoints.csv", eh, er))
    if cfg.output["figures"]:
        artifacts.append(figures.fig_clt(report, out))
    checks = [
        _check("clt_fraction_within_3se",
               report.fraction_within_3 >= cfg.clt["threshold"],
               report.fraction_within_3, cfg.clt["threshold"]),
    ]
    tolerances = {"z_threshold": 3.0, "fraction_threshold": cfg.clt["threshold"]}
    extra = {"model": model.name, "epsilon": cfg.epsilon, "M": cfg.montecarlo["M"],
             "h": h, "low_power": report.low_power}
    return _finish(out, cfg.raw, checks, artifacts, tolerances, seed,
                   args.json, "clt-check", extra=extra)


def _laplace_case(rng):
    a = rng.uniform(0.8, 1.5)
    c3 = rng.uniform(-0.3, 0.3)
    c4 = rng.uniform(0.1, 0.3)
    h = laplace.polynomial_bundle(1, c2=[[a]], c3=[[[c3]]], c4=[[[[c4]]]], name="h")
    f_c1 = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0)
    f = laplace.polynomial_bundle(
        1, c0=rng.uniform(0.5, 1.5), c1=[f_c1],
        c2=[[rng.uniform(-1.0, 1.0)]],
        c3=[[[rng.uniform(-1.0, 1.0)]]],
        c4=[[[[rng.uniform(-1.0, 1.0)]]]], name="f",
    )
    p = laplace.polynomial_bundle(1, c1=[rng.uniform(-0.3, 0.3)],
                                  c2=[[rng.uniform(-0.2, 0.2)]], name="p")
    g = laplace.exp_bundle(p, name="g")
    return f, g, h


def laplace_battery(cases=10, seed=2024, resolution=8,
                    eps_values=(0.1, 0.05, 0.025, 0.0125)):
    """Randomized slope experiment for every expansion; returns records, slopes.

    For each random (f, g, h) the four expansions are compared against the
    quadrature oracle over the eps ladder; the convention variant of the
    rank-6 correction term is included as ``integral_as_printed`` for
    reference (it fails the slope bar, which is the point).
    """
    rng = np.random.default_rng(seed)
    box = (-4.5, 4.5)
    xstar = np.zeros(1)
    records = []
    slopes = {}
    for case in range(cases):
        f, g, h = _laplace_case(rng)
        errs = {q: [] for q in ("integral", "integral_as_printed", "ratio",
                                "weighted", "variance")}
        for eps in eps_values:
            den = laplace.quadrature_oracle(laplace.constant_bundle(1), g, h,
                                            eps, box, resolution).value
            den1 = laplace.quadrature_oracle(laplace.constant_bundle(1),
                                             laplace.constant_bundle(1), h,
                                             eps, box, resolution).value
            num1 = laplace.quadrature_oracle(f, laplace.constant_bundle(1), h,
                                             eps, box, resolution).value
            numg = laplace.quadrature_oracle(f, g, h, eps, box, resolution).value
            numg2 = laplace.quadrature_oracle(
                lambda pts: np.asarray(f.value(pts)) ** 2, g, h, eps, box,
                resolution).value

            pairs = {
                "integral": (laplace.laplace_integral(f, h, xstar, eps), num1),
                "integral_as_printed": (
                    laplace.laplace_integral(f, h, xstar, eps,
                                             eta_convention="as-printed"),
                    num1),
                "ratio": (laplace.laplace_ratio(f, h, xstar, eps), num1 / den1),
                "weighted": (laplace.laplace_weighted_ratio(f, g, h, xstar, eps),
                             numg / den),
                "variance": (laplace.laplace_variance(f, g, h, xstar, eps),
                             numg2 / den - (numg / den) ** 2),
            }
            for q, (approx, oracle) in pairs.items():
                err = abs(approx - oracle)
                errs[q].append(err)
                records.append({"quantity": q, "case": case, "eps": eps,
                                "approx": approx, "oracle": oracle,
                                "abs_error": err, "slope": np.nan})
        for q, es in errs.items():
            s = laplace.slope_of_errors(eps_values, es)
            slopes.setdefault(q, []).append(s)
            for r in records:
                if r["quantity"] == q and r["case"] == case:
                    r["slope"] = s
    return records, slopes


def _run_laplace_check(cfg, args):
    out = _out_dir(cfg, args)
    seed = args.seed if args.seed is not None else cfg.laplace["seed"]
    records, slopes = laplace_battery(cases=cfg.laplace["cases"], seed=seed,
                                      resolution=cfg.laplace["resolution"])
    header, rows = reports.laplace_report_rows(records)
    artifacts = [reports.write_csv(out / "epsilon_error.csv", header, rows)]
    if cfg.output["figures"]:
        artifacts.append(figures.fig_slopes(records, out))
    thr = cfg.laplace["slope_threshold"]
    checks = [
        _check(f"slope_{q}", min(slopes[q]) >= thr, min(slopes[q]), thr)
        for q in ("integral", "ratio", "weighted", "variance")
    ]
    checks.append(_check("wick_theta_1d",
                         float(laplace.gaussian_moment_4(1)[0, 0, 0, 0]) == 3.0,
                         float(laplace.gaussian_moment_4(1)[0, 0, 0, 0]), 3.0))
    checks.append(_check("wick_lambda_1d",
                         float(laplace.gaussian_moment_6(1)[(0,) * 6]) == 15.0,
                         float(laplace.gaussian_moment_6(1)[(0,) * 6]), 15.0))
    tolerances = {"slope_threshold": thr, "eps_values": [0.1, 0.05, 0.025, 0.0125]}
    extra = {"cases": cfg.laplace["cases"],
             "as_printed_min_slope": min(slopes["integral_as_printed"])}
    return _finish(out, cfg.raw, checks, artifacts, tolerances, seed,
                   args.json, "laplace-check", extra=extra)


def _run_scaling(cfg, args):
    out = _out_dir(cfg, args)
    seed = args.seed if args.seed is not None else cfg.scaling["seed"]
    orders = cfg.scaling["orders"] or [0.0, 0.5, 1.0, 2.0, 3.0]
    alphas = cfg.scaling["alphas"] or [1.0, 2.0, 4.0, 8.0]
    points = cfg.scaling["points"]
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.1, 2.0, size=points)
    records = []
    all_independent = True
    for n in orders:
        k = scaling.monomial_scaling_exponent(n)
        g = lambda x, _n=n: np.asarray(x, dtype=float) ** _n
        ref = None
        for alpha in alphas:
            st = scaling.SpaceTimeStructure.power_law(alpha, k)
            b_eps, _, eps = scaling.rescale_sde(g, np.eye(1), st)
            vals = b_eps(xs)
            if ref is None:
                ref = vals
                dev = 0.0
            else:
                dev = float(np.max(np.abs(vals - ref))
                            / max(1.0, float(np.max(np.abs(ref)))))
            independent = dev < 1e-12
            all_independent = all_independent and independent
            records.append({
                "order_n": n, "k": k, "alpha": alpha, "beta": st.beta,
                "eps": eps,
                "eps_power": scaling.monomial_drift_epsilon_power(k, n),
                "max_drift_deviation": dev, "eps_independent": independent,
            })
    # a deliberately mismatched time scale: quadratic drift with k=0 does
    # not converge, and the table shows the nonzero eps power
    g2 = lambda x: np.asarray(x, dtype=float) ** 2
    ref = None
    mismatched_dependent = False
    for alpha in alphas:
        st = scaling.SpaceTimeStructure.power_law(alpha, 0.0)
        b_eps, _, eps = scaling.rescale_sde(g2, np.eye(1), st)
        vals = b_eps(xs)
        if ref is None:
            ref = vals
            dev = 0.0
        else:
            dev = float(np.max(np.abs(vals - ref))
                        / max(1.0, float(np.max(np.abs(ref)))))
            if dev > 1e-6:
                mismatched_dependent = True
        records.append({
            "order_n": 2.0, "k": 0.0, "alpha": alpha, "beta": st.beta,
            "eps": eps,
            "eps_power": scaling.monomial_drift_epsilon_power(0.0, 2.0),
            "max_drift_deviation": dev, "eps_independent": dev < 1e-12,
        })

    b_S = lambda x: -np.asarray(x, dtype=float)
    b_I = scaling.ito_from_stratonovich(b_S, np.zeros(1), cfg.epsilon)
    ito_dev = float(np.max(np.abs(b_I(xs) - b_S(xs))))

    header, rows = reports.scaling_report_rows(records)
    artifacts = [reports.write_csv(out / "scaling_table.csv", header, rows)]
    checks = [
        _check("matched_drift_eps_independent", all_independent,
               all_independent, True),
        _check("mismatched_drift_eps_dependent", mismatched_dependent,
               mismatched_dependent, True),
        _check("ito_constant_diffusion_identity", ito_dev == 0.0, ito_dev, 0.0),
    ]
    tolerances = {"independence_tol": 1e-12}
    return _finish(out, cfg.raw, checks, artifacts, tolerances, seed,
                   args.json, "scaling", extra={"orders": orders,
                                                "alphas": alphas})


def _run_describe(args):
    info = describe_builtin(args.model)
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True, default=str))
    else:
        print(f"model: {info['name']}")
        print(f"dimension: {info['dim']}")
        print(f"equations: {info['equations']}")
        print(f"parameters: {', '.join(info['params']) or '(none)'}")
        print(f"domain box: {info['domain_box']}")
    return 0


_HANDLERS = {
    "validate": _run_validate,
    "cycle-report": _run_cycle_report,
    "clt-check": _run_clt_check,
    "laplace-check": _run_laplace_check,
    "scaling": _run_scaling,
}


def run(cfg, analysis, args):
    """Dispatch one analysis on a validated config."""
    if cfg.analysis is not None and cfg.analysis != analysis:
        raise ConfigError(
            f"config selects analysis '{cfg.analysis}' but the "
            f"'{analysis}' subcommand was invoked"
        )
    return _HANDLERS[analysis](cfg, args)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stochcycle",
        description="Stochastic limit-cycle asymptotics: reports and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ANALYSES:
        p = sub.add_parser(name, help=f"run the {name} analysis")
        p.add_argument("--config", required=True, help="YAML config path")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override for the stochastic stage")
        p.add_argument("--json", action="store_true",
                       help="print a JSON summary to stdout")
    d = sub.add_parser("describe", help="describe a builtin model")
    d.add_argument("model", help="builtin model name")
    d.add_argument("--json", action="store_true")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "describe":
            return _run_describe(args)
        cfg = load_config(args.config)
        return run(cfg, args.command, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
