"""Command-line entry point: ``qubit-thermometry {sweep,calibrate,qp,trace,schema}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .config import ExperimentConfig, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubit-thermometry",
        description="Simulate and analyse e-f Rabi excited-state population measurements.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory (default: config out_dir)")
    common.add_argument("--jobs", type=int, default=1, help="parallel set-point jobs")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="temperature sweep -> sweep.csv, summary.txt, samples_*.csv")
    sub.add_parser("calibrate", parents=[common], help="fractional-pump calibration -> calibration.csv")
    qp = sub.add_parser("qp", parents=[common], help="quasiparticle density / T1 report")
    qp.add_argument("--pe", type=float, help="excited-state population to analyse")
    sub.add_parser("trace", parents=[common], help="one reference + signal Rabi trace -> trace.csv")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _load(args) -> ExperimentConfig:
    overrides = {"seed": args.seed}
    if args.config is None and args.seed is None:
        raise SystemExit("error: a seed is required (--seed N or `seed:` in --config)")
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "schema":
        print(json.dumps(ExperimentConfig.model_json_schema(), indent=2))
        return 0

    cfg = _load(args)
    out = args.out or Path(cfg.out_dir)

    if args.command == "sweep":
        result = runner.run_temperature_sweep(cfg, jobs=args.jobs)
        paths = runner.write_sweep(result, out, write_samples=cfg.sweep.write_samples)
        sys.stdout.write(runner.render_summary(result.rows))
    elif args.command == "calibrate":
        result = runner.run_calibration(cfg, jobs=args.jobs)
        paths = [runner.write_calibration(result, out)]
        fit = result.fit
        print(
            f"slope = {fit.slope:.5f}  intercept = {100 * fit.intercept:.4f}%  "
            f"95% CI = ({100 * fit.ci95[0]:.4f}%, {100 * fit.ci95[1]:.4f}%)"
        )
    elif args.command == "qp":
        report = runner.run_qp_analysis(cfg, pe=args.pe)
        paths = [runner.write_qp_report(report, out)]
        print(f"n_qp/n_cp = {report['density_ratio']:.3e}")
        print(f"Gamma_qp  = {report['gamma_qp_khz']:.3f} kHz")
        t1 = report["t1_qp_us"]
        print("T1_qp     = unbounded" if report["t1_qp_unbounded"] else f"T1_qp     = {t1:.1f} us "
              f"({report['t1_qp_over_measured']:.2f} x measured {report['t1_measured_us']:g} us)")
    else:
        result = runner.run_trace(cfg)
        paths = [runner.write_trace(result, out)]
        print(
            f"A_ref = {result['reference_fit'].amplitude:.5g} V  A_sig = {result['signal_fit'].amplitude:.5g} V  "
            f"P_e^exp = {result['pexp']:.5f} (true {result['pexp_true']:.5f})"
        )
    for p in paths:
        logging.getLogger(__name__).info("wrote %s", p)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
