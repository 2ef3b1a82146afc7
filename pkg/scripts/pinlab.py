#!/usr/bin/env python3
"""Command-line entry point of the pinning laboratory.

Usage:
    python pinlab.py annealed     --config config/example.yml
    python pinlab.py free-energy  --config config/example.yml --out results/fe.csv
    python pinlab.py scan-uc      --config config/example.yml --threads 8
    python pinlab.py blocks       --config config/example.yml
    python pinlab.py bound        --config config/example.yml
    python pinlab.py validate     [--full]
    python pinlab.py dump-law     --config config/example.yml

Exit codes: 0 success, 1 numeric failure or failed validation, 2 usage or
configuration error.  No environment variables are consulted.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from annealed import (
    beta_delta_for_M,
    contact_fraction_annealed,
    invert_psi,
    predict_log_M_asymptotic,
    solve_free_energy,
    u_c_annealed,
)
from coarse_grain import c_phi_constant, check_scales, choose_scales, estimate_p_good, fq_lower_bound
from config_loader import ExperimentConfig, load_experiment_config
from disorder import sample
from errors import ConfigError, PinningError
from excursion_law import ExcursionLaw, write_law_dump
from harness import render_csv, run_free_energy, run_scan, write_output
from num_utils import fmt_float, fmt_log_scale
from pinning_dp import PinningParams, log_z_constrained, write_dp_dump
from validation import run_suites

logger = logging.getLogger("pinlab")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _law_with_horizon(cfg: ExperimentConfig, n: int) -> ExcursionLaw:
    if cfg.law_n_max is not None and cfg.law_n_max >= n:
        return cfg.build_law()
    return replace(cfg, law_n_max=max(cfg.horizon(), n)).build_law()


def _params_for_M(cfg: ExperimentConfig, law: ExcursionLaw) -> PinningParams:
    """Parameters whose annealed correlation length is blocks.M."""
    model = cfg.model()
    beta_delta = beta_delta_for_M(law, cfg.blocks_M)
    u = beta_delta / cfg.beta + u_c_annealed(model, cfg.beta)
    logger.info("blocks.M=%g: beta*Delta=%.10g, u=%.10g", cfg.blocks_M, beta_delta, u)
    return PinningParams(cfg.beta, u, model)


def cmd_annealed(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    law = cfg.build_law()
    rows = []
    for beta_delta in cfg.annealed_beta_delta:
        solution = solve_free_energy(law, beta_delta)
        if beta_delta > 0:
            contact = contact_fraction_annealed(law, beta_delta)
            contact_value, log_proxy = contact.value, contact.log_proxy
        else:
            contact_value, log_proxy = 0.0, math.nan
        try:
            predicted = predict_log_M_asymptotic(law.phi_effective, beta_delta)
        except PinningError:
            predicted = math.nan
        try:
            psi_root = invert_psi(law.phi_effective, beta_delta)
        except PinningError:
            psi_root = math.nan
        rows.append([
            fmt_float(beta_delta),
            fmt_float(solution.s),
            fmt_float(solution.log_M),
            "inf" if math.isinf(solution.log_M) else fmt_log_scale(solution.M, solution.log_M),
            solution.method,
            fmt_float(solution.residual),
            fmt_float(contact_value),
            fmt_float(log_proxy),
            fmt_float(predicted),
            fmt_float(psi_root),
        ])
    header = ["beta_delta", "s", "log_M", "M_or_logM", "method", "residual",
              "contact_fraction", "log_contact_proxy", "predicted_log_M", "psi_root_log_M"]
    summary = f"uc_a={fmt_float(u_c_annealed(cfg.model(), cfg.beta))}"
    return _csv_text(header, rows), summary


def _maybe_dump_dp(cfg: ExperimentConfig, law: ExcursionLaw, args: argparse.Namespace) -> None:
    if args.dump_dp is None:
        return
    N = max(cfg.n_grid)
    u = cfg.u_values()[0]
    V = sample(cfg.model(), cfg.seed, 0, N).values
    write_dp_dump(log_z_constrained(law, PinningParams(cfg.beta, u, cfg.model()), V, N), args.dump_dp)
    logger.info("Wrote DP dump for replica 0, u=%g, N=%d to %s", u, N, args.dump_dp)


def cmd_free_energy(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    law = cfg.build_law()
    rows = run_free_energy(cfg, law)
    _maybe_dump_dp(cfg, law, args)
    return render_csv(rows, timing=args.timing), None


def cmd_scan(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    law = cfg.build_law()
    scan = run_scan(cfg, law)
    _maybe_dump_dp(cfg, law, args)
    return render_csv(scan.rows, timing=args.timing), scan.summary_line()


def cmd_blocks(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    law = cfg.build_law()
    model = cfg.model()
    if cfg.blocks_K2 is not None:
        scales = check_scales(law, model, cfg.beta, cfg.blocks_M, math.log(cfg.blocks_K1), cfg.blocks_K2)
    else:
        scales = choose_scales(law, model, cfg.beta, cfg.blocks_M, "desk", K1_max=cfg.blocks_K1)
    params = _params_for_M(cfg, law)
    report = estimate_p_good(law, params, model, scales, cfg.blocks_replicas, cfg.seed, cfg.threads)
    rows = [
        [str(d.replica), "good" if d.good else "bad", fmt_float(d.log_w_sum), fmt_float(d.log_reference_sum)]
        for d in report.diagnostics
    ]
    summary = (f"p_good={fmt_float(report.p_good_hat)} stderr={fmt_float(report.stderr)} "
               f"K1={scales.K1} K2={scales.K2} flags={int(scales.flags.block_variance)}"
               f"{int(scales.flags.excursion_cost)}{int(scales.flags.block_length)}")
    return _csv_text(["replica", "verdict", "logW", "logRef"], rows), summary


def cmd_bound(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    law = cfg.build_law()
    model = cfg.model()
    if cfg.bound_mode == "desk":
        scales = choose_scales(law, model, cfg.beta, cfg.blocks_M, "desk", K1_max=cfg.blocks_K1)
    else:
        scales = choose_scales(law, model, cfg.beta, cfg.blocks_M, "compliant")
    law = _law_with_horizon(cfg, scales.K2)
    params = _params_for_M(cfg, law)
    c_phi = c_phi_constant(law.phi_effective, log_K=scales.log_K1).value

    p_good = None
    if scales.feasible and cfg.bound_mode == "desk":
        p_good = estimate_p_good(law, params, model, scales, cfg.blocks_replicas, cfg.seed, cfg.threads).p_good_hat
        p_good = p_good if p_good > 0 else None
    bound = fq_lower_bound(law, params, scales, c_phi, p_good=p_good)

    def opt(x: float | None) -> str:
        return "nan" if x is None else fmt_float(x)

    terms = [
        ("mode", cfg.bound_mode),
        ("log_K1", fmt_float(scales.log_K1)),
        ("K2", str(scales.K2)),
        ("M", fmt_float(scales.M)),
        ("lambda", fmt_float(scales.lam)),
        ("flag_block_variance", str(scales.flags.block_variance)),
        ("flag_excursion_cost", str(scales.flags.excursion_cost)),
        ("flag_block_length", str(scales.flags.block_length)),
        ("log_annealed", fmt_float(bound.log_annealed)),
        ("log_excursion_constant", fmt_float(bound.log_excursion_constant)),
        ("log_c_phi", fmt_float(bound.log_c_phi)),
        ("log_phi_K1", fmt_float(bound.log_phi_K1)),
        ("bracket", fmt_float(bound.bracket)),
        ("bracket_lemma", fmt_float(bound.bracket_lemma)),
        ("bracket_coarse", fmt_float(bound.bracket_coarse)),
        ("log_bound", opt(bound.log_bound)),
        ("p_good", opt(bound.p_good)),
        ("bracket_measured", opt(bound.bracket_measured)),
        ("log_bound_measured", opt(bound.log_bound_measured)),
        ("conclusive", str(bound.conclusive)),
    ]
    summary = "conclusion=" + ("positive" if bound.conclusive else "none")
    return _csv_text(["term", "value"], [list(t) for t in terms]), summary


def cmd_dump_law(cfg: ExperimentConfig, args: argparse.Namespace) -> tuple[str, str | None]:
    buffer = io.StringIO()
    write_law_dump(cfg.build_law(), buffer)
    return buffer.getvalue(), None


COMMANDS = {
    "annealed": cmd_annealed,
    "free-energy": cmd_free_energy,
    "scan-uc": cmd_scan,
    "blocks": cmd_blocks,
    "bound": cmd_bound,
    "dump-law": cmd_dump_law,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment YAML file")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--threads", type=int, help="worker threads (overrides config)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="pinlab", description="Disordered pinning laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name in ("free-energy", "scan-uc"):
            cmd.add_argument("--timing", action="store_true", help="write wallclock seconds instead of nan")
            cmd.add_argument("--dump-dp", type=Path, help="write 'n log_zc' lines for replica 0")
    validate = sub.add_parser("validate", parents=[common])
    validate.add_argument("--full", action="store_true", help="acceptance-scale runs (minutes)")
    validate.add_argument("--suite", action="append", help="run only the named suite (repeatable)")
    return parser


def _run_validate(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 20240601
    reports = run_suites(full=args.full, seed=seed, only=args.suite)
    failed = 0
    for report in reports:
        print(f"{report.name}: {report.passed}/{len(report.results)} passed")
        for result in report.results:
            if not result.passed:
                print(f"  FAILED {result.name}: {result.detail}")
        failed += not report.ok
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )

    try:
        if args.command == "validate":
            return _run_validate(args)

        cfg = load_experiment_config(args.config) if args.config is not None else ExperimentConfig()
        cfg = cfg.with_overrides(seed=args.seed, threads=args.threads)
        text, summary = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"pinlab: {exc}", file=sys.stderr)
        return 2
    except PinningError as exc:
        print(f"pinlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    out = args.out if args.out is not None else cfg.output
    write_output(text, out, sys.stdout)
    if summary:
        print(summary)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
