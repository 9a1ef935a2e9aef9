"""Command line entry point: ``ctw-turbo <command> [config] [--key value ...]``.

Every field of :class:`~ctw_turbo.config.ExperimentConfig` is also a flag
(``--snr-db 6,8,10``); flags override the config file. Output goes to
``--output-dir``, else ``$CTW_TURBO_OUTPUT_DIR``, else ``./results``. Check
commands exit with status 1 when their property fails; bad input exits 2.
"""

import argparse
import sys
from dataclasses import fields

import numpy as np

from .config import ExperimentConfig, load_config
from .experiment import (
    exit_curve_rows,
    filter_rows,
    filter_trajectories,
    metadata_rows,
    output_dir,
    run_experiment,
    write_csv,
)
from .verification import gradient_lemma_check, log_regret_ratios, mse_gap_check, regret_check

GRADIENT_TOL = 1e-5
GAP_FACTOR = 0.75
GAP_ABS = 1e-9
EXIT_ENDPOINT_TOL = 0.02
SPREAD_RATIO = 10.0


def _build_parser():
    parser = argparse.ArgumentParser(prog="ctw-turbo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "BER/MSE/EXIT simulation, writes every CSV",
        "regret": "cumulative-loss regret of the context tree vs every subtree",
        "gradcheck": "analytic vs finite-difference derivative of v^H M^-1 v",
        "msegap": "excess MSE of a centroid filter vs distance",
        "exit": "exact vs time-averaged MMSE transfer curves",
        "dump-filters": "per-symbol MMSE taps and LMS taps at the second iteration",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", nargs="?", help="key = value config file")
        p.add_argument("--output-dir", help="overrides $CTW_TURBO_OUTPUT_DIR")
        for f in fields(ExperimentConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE")
    return parser


def _config_from(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, overrides)


def _report(ok, message):
    print(("PASS " if ok else "FAIL ") + message)
    return 0 if ok else 1


def cmd_run(config, out):
    records, paths = run_experiment(config, out)
    for eq in config.equalizers:
        for snr in config.snr_db:
            vals = [r[6] for rec in records for r in rec.rows["ber"] if r[0] == eq and r[1] == snr and r[3] == config.n_iter]
            print(f"{eq:16s} snr={snr:5.1f} dB  ber={np.mean(vals):.5f}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_regret(config, out):
    rows = regret_check(config.depth, config.regret_lengths, range(config.regret_seeds), mu=1e-2)
    write_csv(
        out / "regret.csv",
        "regret",
        ([r.seed, r.n, r.partition, r.prior_bits, r.partition_loss, r.ctw_loss, r.bound, r.slack] for r in rows),
    )
    ratios = log_regret_ratios(config.depth, lengths=(1000, 2000), seed=config.seed)
    print(f"rls (ctw loss - best batch loss) / ln n at n=1000, 2000: {ratios[0]:.3f}, {ratios[1]:.3f}")
    worst = min(r.slack for r in rows)
    return _report(worst >= 0, f"regret bound: min slack {worst:.4g} over {len(rows)} (run, partition) pairs")


def cmd_gradcheck(config, out):
    res = gradient_lemma_check(config.taps, config.n1, config.n2, seed=config.seed)
    return _report(res.max_rel_error <= GRADIENT_TOL, f"gradient lemma: max relative error {res.max_rel_error:.3e}")


def cmd_msegap(config, out):
    radii, gaps = mse_gap_check(config.taps, n1=config.n1, n2=config.n2, seed=config.seed)
    write_csv(out / "msegap.csv", "msegap", zip(radii.tolist(), gaps.tolist()))
    ok = all(gaps[i + 1] <= GAP_FACTOR * gaps[i] + GAP_ABS for i in range(len(gaps) - 1))
    return _report(ok, "mse gap: " + ", ".join(f"gap({r:g})={g:.3e}" for r, g in zip(radii, gaps)))


def cmd_exit(config, out):
    rows = exit_curve_rows(config)
    write_csv(out / "exit.csv", "exit", rows)
    status = 0
    for snr in config.snr_db:
        exact = {r[5]: r[6] for r in rows if r[0] == "mmse-exact" and r[1] == snr}
        avg = {r[5]: r[6] for r in rows if r[0] == "mmse-timeavg" and r[1] == snr}
        for ia in config.exit_ia:
            diff = exact[ia] - avg[ia]
            ok = abs(diff) <= EXIT_ENDPOINT_TOL if ia in (0.0, 1.0) else diff >= 0
            status |= _report(ok, f"exit snr={snr:g} I_A={ia:g}: exact {exact[ia]:.4f} timeavg {avg[ia]:.4f}")
    return status


def cmd_dump_filters(config, out):
    dump = filter_trajectories(config)
    write_csv(out / "filters.csv", "filters", filter_rows(dump))
    write_csv(out / "metadata.csv", "metadata", metadata_rows(config, {"filter_spread_ratio": repr(dump.spread_ratio)}))
    return _report(dump.spread_ratio > SPREAD_RATIO, f"filter spread ratio mmse/lms = {dump.spread_ratio:.2f}")


COMMANDS = {
    "run": cmd_run,
    "regret": cmd_regret,
    "gradcheck": cmd_gradcheck,
    "msegap": cmd_msegap,
    "exit": cmd_exit,
    "dump-filters": cmd_dump_filters,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = output_dir(args.output_dir)
    return COMMANDS[args.command](config, out)


if __name__ == "__main__":
    sys.exit(main())
