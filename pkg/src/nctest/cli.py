"""Command-line interface.

Subcommands: predict | optimize | lrt | simulate | characterize.
Common flags: --config PATH, --seed N, --out DIR, --format json|csv|table.
Exit codes: 0 ok, 2 validation error, 3 runtime error (including infeasible
optimization).  Reports go to stdout in the chosen format; with --out, a JSON
report, CSV tables, and PNG figures are written atomically into the
directory.  All randomness flows from the required master seed, so rerunning
a subcommand with the same config and seed reproduces every output byte.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from . import analysis, lrt_models, report
from .config import RunConfig, load_config
from .errors import NctestError
from .photon_sim import background_subtract, characterize_source
from .pipeline import simulate_test_run
from .test_core import optimize_parameters, predict, pure_state_H

BUNDLED_COUNTEREXAMPLE = "counterexample_model.json"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nctest",
        description="Single-qubit nonclassicality test: predictions, hidden-variable "
        "models, and a simulated heralded-photon experiment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="INI run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument(
            "--format", choices=("table", "json", "csv"), default="table", help="stdout format"
        )

    p_predict = sub.add_parser("predict", help="quantum predictions for the configured test")
    common(p_predict)
    p_predict.add_argument(
        "--optimize", action="store_true", help="also search parameter space for a better point"
    )

    p_opt = sub.add_parser("optimize", help="constrained search for maximal violation")
    common(p_opt)

    p_lrt = sub.add_parser("lrt", help="evaluate a hidden-variable model file")
    common(p_lrt)
    p_lrt.add_argument(
        "--model", type=Path, default=None,
        help="model JSON (default: bundled step-function counterexample)",
    )
    p_lrt.add_argument("--tol", type=float, default=0.0, help="dominance tolerance")

    p_sim = sub.add_parser("simulate", help="run the simulated experiment end to end")
    common(p_sim)

    p_char = sub.add_parser("characterize", help="two-detector source characterization")
    common(p_char)
    return parser


def _emit(rows, payload, fmt: str, out_dir: Path | None, name: str, columns=report.TABLE_COLUMNS):
    if fmt == "json":
        sys.stdout.write(report.render_json(payload))
    elif fmt == "csv":
        sys.stdout.write(report.render_csv(rows, columns))
    else:
        sys.stdout.write(report.render_table(rows, columns))
    if out_dir is not None:
        report.write_atomic(out_dir / f"{name}.json", report.render_json(payload))
        report.write_atomic(out_dir / f"{name}.csv", report.render_csv(rows, columns))


def _meta(cfg: RunConfig, command: str) -> dict:
    return {
        "tool": "nctest",
        "command": command,
        "seed": cfg.seed,
        "n_gates": cfg.n_gates,
        "blocks": cfg.n_blocks,
    }


def cmd_predict(cfg: RunConfig, args) -> int:
    pred = predict(cfg.params, pure_state_H())
    rows = report.prediction_rows(pred, cfg.params)
    payload = {
        "meta": _meta(cfg, "predict"),
        "parameters": report.params_dict(cfg.params),
        "prediction": pred.as_dict(),
    }
    if getattr(args, "optimize", False):
        opt_params, opt_pred = optimize_parameters(
            cfg.optimize_bounds, cfg.d_min_floor, cfg.optimize_grid_points
        )
        payload["optimized"] = {
            "parameters": report.params_dict(opt_params),
            "prediction": opt_pred.as_dict(),
            "violation": -opt_pred.diff_second,
            "d_min_floor": cfg.d_min_floor,
        }
        rows.append({"quantity": "optimized_violation", "value": -opt_pred.diff_second})
    _emit(rows, payload, args.format, args.out, "predict", columns=("quantity", "value"))
    if args.out is not None:
        thetas, curve = report.violation_scan_curve(cfg.params)
        scan_rows = [{"theta_rad": float(t), "diff_second": float(v)} for t, v in zip(thetas, curve)]
        report.write_atomic(
            args.out / "violation_scan.csv",
            report.render_csv(scan_rows, columns=("theta_rad", "diff_second")),
        )
        report.violation_scan_figure(cfg.params, args.out / "violation_scan.png")
    return 0


def cmd_optimize(cfg: RunConfig, args) -> int:
    opt_params, opt_pred = optimize_parameters(
        cfg.optimize_bounds, cfg.d_min_floor, cfg.optimize_grid_points
    )
    rows = report.prediction_rows(opt_pred, opt_params)
    rows.append({"quantity": "violation", "value": -opt_pred.diff_second})
    for axis in ("a0", "b0", "p1", "alpha", "beta"):
        rows.append({"quantity": f"best_{axis}", "value": getattr(opt_params, axis)})
    payload = {
        "meta": _meta(cfg, "optimize"),
        "bounds": {k: list(v) for k, v in cfg.optimize_bounds.items()},
        "d_min_floor": cfg.d_min_floor,
        "parameters": report.params_dict(opt_params),
        "prediction": opt_pred.as_dict(),
        "violation": -opt_pred.diff_second,
    }
    _emit(rows, payload, args.format, args.out, "optimize", columns=("quantity", "value"))
    return 0


def cmd_lrt(cfg: RunConfig, args) -> int:
    if args.model is None:
        with resources.as_file(
            resources.files("nctest.data").joinpath(BUNDLED_COUNTEREXAMPLE)
        ) as path:
            model = lrt_models.load_model(path)
    else:
        model = lrt_models.load_model(args.model)
    moments = lrt_models.classical_moments(model)
    dom = lrt_models.check_dominance(model, tol=args.tol)
    rows = report.lrt_rows(moments, dom)
    payload = {
        "meta": _meta(cfg, "lrt"),
        "moments": {
            "mean_A": moments[0],
            "mean_A2": moments[1],
            "mean_B": moments[2],
            "mean_B2": moments[3],
        },
        "dominance_holds": dom.holds,
        "violation_intervals": [list(iv) for iv in dom.violation_intervals],
        "theorem_check": lrt_models.classical_theorem_check(model),
    }
    _emit(rows, payload, args.format, args.out, "lrt", columns=("quantity", "value"))
    if not dom.holds:
        spans = ", ".join(f"({lo:.6f}, {hi:.6f})" for lo, hi in dom.violation_intervals)
        sys.stdout.write(f"dominance violated on {spans}\n")
    if args.out is not None:
        report.lrt_model_figure(model, dom, args.out / "lrt_model.png")
    return 0


def _require_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ValueError("a master seed is required: set --seed or [execution] seed")
    return cfg.seed


def cmd_simulate(cfg: RunConfig, args) -> int:
    seed = _require_seed(cfg)
    result = simulate_test_run(cfg.params, cfg.chain, cfg.n_gates, seed, cfg.n_blocks)
    pred = predict(cfg.params, pure_state_H())
    sig = result.violation_significance
    rows = report.measurement_rows(
        result.assembled,
        pred,
        result.estimates.splitting_first,
        result.estimates.splitting_second,
        cfg.params,
        sig,
    )
    payload = {
        "meta": _meta(cfg, "simulate"),
        "parameters": report.params_dict(cfg.params),
        "prediction": pred.as_dict(),
        "estimates": {
            "p_alpha": report.estimate_dict(result.estimates.p_alpha),
            "p_beta_first": report.estimate_dict(result.estimates.p_beta_first),
            "p_beta_second": report.estimate_dict(result.estimates.p_beta_second),
            "splitting_first": report.estimate_dict(result.estimates.splitting_first),
            "splitting_second": report.estimate_dict(result.estimates.splitting_second),
        },
        "quantities": {
            name: report.estimate_dict(getattr(result.assembled, name))
            for name in (
                "mean_A", "mean_A2", "mean_B", "mean_B2",
                "diff_first", "diff_second", "d_minus_indirect",
            )
        },
        "significance": sig,
        "records": {label: rec.to_dict() for label, rec in result.records.items()},
    }
    _emit(rows, payload, args.format, args.out, "simulate")
    if args.out is not None:
        for label, hist in result.histograms.items():
            report.write_atomic(args.out / f"mca_{label}.csv", hist.to_csv())
        report.measurement_figure(result.assembled, pred, args.out / "simulate_report.png")
    return 0


def cmd_characterize(cfg: RunConfig, args) -> int:
    seed = _require_seed(cfg)
    char, record, hist = characterize_source(cfg.chain, cfg.n_gates, seed, cfg.n_blocks)
    metrics = analysis.characterization_metrics(char)
    source = cfg.chain.source
    tau, p = cfg.chain.tau, cfg.chain.switch_ratio
    analytic = analysis.analytic_Q(source, tau, p)
    ideal = {
        "gamma1": (p * tau) / (1.0 - p * tau),  # ideal single-photon reference
        "gamma2": 0.0,
        "grangier_alpha": 0.0,
    }
    poisson = {"gamma_ratio_smallmu": 1.0}
    rows = report.characterization_rows(metrics, ideal, poisson)
    try:
        sub = background_subtract(hist)
        bkg = {
            "true_count": sub.true_count,
            "true_sigma": sub.true_sigma,
            "background_count": sub.background_count,
            "background_sigma": sub.background_sigma,
        }
        rows.append({"quantity": "mca_true_count", "value": sub.true_count,
                     "sigma_stat": sub.true_sigma})
        rows.append({"quantity": "mca_background_count", "value": sub.background_count,
                     "sigma_stat": sub.background_sigma})
    except NctestError:
        bkg = None
    payload = {
        "meta": _meta(cfg, "characterize"),
        "source": {"kind": source.kind, "mu": source.mu, "background_prob": source.background_prob},
        "tallies": {
            "n_gates": char.n_gates,
            "count_arm1": char.count_arm1,
            "count_arm2": char.count_arm2,
            "count_both": char.count_both,
            "q0": char.q0,
            "q1_arm1": char.q1_arm1,
            "q1_arm2": char.q1_arm2,
            "q2": char.q2,
        },
        "metrics": {
            "gamma1": report.estimate_dict(metrics.gamma1),
            "gamma2": report.estimate_dict(metrics.gamma2),
            "gamma_ratio": report.estimate_dict(metrics.gamma_ratio),
            "grangier_alpha": report.estimate_dict(metrics.grangier_alpha),
        },
        "analytic": {
            "q1": analytic.q1,
            "q2": analytic.q2,
            "q0": analytic.q0,
            "gamma1": analytic.gamma1,
            "gamma2": analytic.gamma2,
            "grangier_alpha": analytic.grangier_alpha,
        },
        "background_subtraction": bkg,
        "record": record.to_dict(),
    }
    _emit(rows, payload, args.format, args.out, "characterize")
    if args.out is not None:
        report.write_atomic(args.out / "mca_histogram.csv", hist.to_csv())
        report.mca_histogram_figure(hist, args.out / "mca_histogram.png")
    return 0


_COMMANDS = {
    "predict": cmd_predict,
    "optimize": cmd_optimize,
    "lrt": cmd_lrt,
    "simulate": cmd_simulate,
    "characterize": cmd_characterize,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.command in ("simulate", "characterize"):
            _require_seed(cfg)
    except (ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"nctest: configuration error: {exc}\n")
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"nctest: validation error: {exc}\n")
        return 2
    except NctestError as exc:
        sys.stderr.write(f"nctest: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"nctest: i/o error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
