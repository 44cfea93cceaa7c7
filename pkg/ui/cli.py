"""
Command-line surface: argparse subcommands over the Engine.

    privacy-curve   eps_DP(t) per sweep point, with the baseline composition curve
    simulate        trace, ledger and bound-report CSVs for seeded training runs
    tradeoff        privacy-utility bound over a grid of privacy targets
    verify          one-step numeric oracle against the per-round RDP bound

Exit status: 0 on success, 1 when ``verify`` finds an in-regime FAIL,
2 on any configuration or domain error.
"""

import argparse
import json
import logging
import math
import os

from core import accountant, verifier
from core.config import PRESETS, build_experiment, header_lines, load_config, save_config
from core.diagnostics import BOUND_HEADER
from core.engine import Engine
from core.errors import DPWFLError
from core.simulator import TRACE_HEADER, trace_rows
from ui.writers import write_csv, write_ledger_csv

logger = logging.getLogger(__name__)

TRADEOFF_HEADER = ("eps", "bound_rdp", "bound_dp", "C1", "C2", "C3")
SUMMARY_HEADER = ("index", "sweep", "crossover_round", "converged_eps_dp", "converged_baseline")
REPLICATE_HEADER = ("value", "metric", "mean", "median", "replicates")


def _provenance(cfg, **extra):
    lines = header_lines(cfg)
    for key, value in extra.items():
        lines.append(f"# {key}={json.dumps(value, sort_keys=True)}")
    return lines


def _suffix(index: int, overrides: dict) -> str:
    return f"_{index}" if overrides else ""


# ── Subcommands ───────────────────────────────────────────────────

def cmd_privacy_curve(cfg) -> int:
    out = cfg["out"]
    engine = Engine(build_experiment(cfg))
    summary = []
    for curve in engine.privacy_curves():
        path = os.path.join(out, f"privacy_curve{_suffix(curve.index, curve.overrides)}.csv")
        write_ledger_csv(path, curve.rows, curve.baseline,
                         _provenance(cfg, sweep=curve.overrides,
                                     crossover_round=curve.crossover,
                                     gamma_monotone=accountant.is_monotone_schedule(
                                         r.gamma for r in curve.rows)))
        summary.append((curve.index, json.dumps(curve.overrides, sort_keys=True),
                        curve.crossover, curve.rows[-1].eps_dp, curve.baseline[-1]))
    write_csv(os.path.join(out, "privacy_curve_summary.csv"), SUMMARY_HEADER, summary,
              _provenance(cfg))
    return 0


def _ledger_rows(params, ledger):
    if params.sigma > 0.0:
        return accountant.privacy_curve(params, ledger.gamma_seq, ledger.phi_reference)
    # sigma = 0: the run carries no privacy guarantee
    replay = accountant.PrivacyLedger(phi_reference=ledger.phi_reference)
    rows = []
    for t, g in enumerate(ledger.gamma_seq, start=1):
        replay.append(params, g)
        rows.append(accountant.LedgerRow(t, g, replay.gamma_sq_sum, replay.phi, replay.Gamma,
                                         math.inf, math.inf))
    return rows, [math.inf] * len(rows)


def cmd_simulate(cfg) -> int:
    out = cfg["out"]
    engine = Engine(build_experiment(cfg))
    for index, overrides, result in engine.simulate_sweep():
        sfx = _suffix(index, overrides)
        prov = _provenance(cfg, sweep=overrides)
        params = engine.experiment.with_overrides(**overrides).params
        write_csv(os.path.join(out, f"trace{sfx}.csv"), TRACE_HEADER,
                  trace_rows(result.trace), prov)
        rows, baseline = _ledger_rows(params, result.ledger)
        write_ledger_csv(os.path.join(out, f"ledger{sfx}.csv"), rows, baseline,
                         _provenance(cfg, sweep=overrides,
                                     gamma_monotone=result.ledger.is_monotone()))
        write_csv(os.path.join(out, f"bound{sfx}.csv"), BOUND_HEADER,
                  [result.report.row()], prov)
        logger.info("point %d: eps_dp=%.6g (ledger replay %.6g), min |grad| %.6g vs bound %.6g",
                    index, result.eps_dp, result.replay_eps_dp,
                    result.comparison.measured_min_grad_norm, result.comparison.bound_total)

    sweep = cfg["sweep"]
    if len(sweep) == 1 and cfg["replicates"] > 1:
        rows = []
        for name, metric in (("final_loss", lambda tr: tr.final_loss),
                             ("min_grad_norm", lambda tr: tr.min_grad_norm())):
            for point in engine.sweep_replicates(metric):
                rows.append((point.value, name, point.mean, point.median, point.replicates))
        write_csv(os.path.join(out, "replicates.csv"), REPLICATE_HEADER, rows,
                  _provenance(cfg, axis=next(iter(sweep))))
    return 0


def cmd_tradeoff(cfg) -> int:
    engine = Engine(build_experiment(cfg))
    write_csv(os.path.join(cfg["out"], "tradeoff.csv"), TRADEOFF_HEADER, engine.tradeoff(),
              _provenance(cfg))
    return 0


def cmd_verify(cfg) -> int:
    engine = Engine(build_experiment(cfg))
    checks = engine.verify()
    write_csv(os.path.join(cfg["out"], "verify.csv"), verifier.VERDICT_HEADER,
              [c.row() for c in checks], _provenance(cfg))
    failed = [c for c in checks if c.verdict == verifier.FAIL and c.in_regime]
    for c in failed:
        logger.error("FAIL alpha=%g gamma=%g q=%g: numeric %.6g > bound %.6g",
                     c.alpha, c.gamma, c.q, c.numeric, c.bound)
    return 1 if failed else 0


COMMANDS = {
    "privacy-curve": cmd_privacy_curve,
    "simulate": cmd_simulate,
    "tradeoff": cmd_tradeoff,
    "verify": cmd_verify,
}


# ── Argument parsing ──────────────────────────────────────────────

def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--seed", type=_seed)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="parallel sweep workers")
    common.add_argument("--verbose", action="store_true", help="per-round debug logging")

    parser = argparse.ArgumentParser(
        prog="dpwfl", description="Differentially private wireless FL simulator and accountant")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _overrides(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = load_config(args.config, args.preset, _overrides(args))
        save_config(cfg, os.path.join(cfg["out"], "config.json"))
        logger.info("%s: T=%d seed=%d out=%s", args.command, cfg["T"], cfg["seed"], cfg["out"])
        return COMMANDS[args.command](cfg)
    except DPWFLError as e:
        logger.error("%s", e)
        return 2
