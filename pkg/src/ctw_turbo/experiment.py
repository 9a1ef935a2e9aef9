"""
Simulation driver and CSV emitters.

Every (SNR point, trial) pair draws its frame from
``default_rng([seed, trial, snr_index])`` and all equalizers see that same
frame, so reruns with the same config are byte-identical and comparisons
between equalizers use common random numbers.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelModel, make_frame
from .ctw import CTWTurboEqualizer, LMSTurboEqualizer, PiecewiseLinearTurboEqualizer
from .exit_chart import exit_curves, exit_trajectory
from .mmse import ExactMMSETurboEqualizer, TimeAveragedMMSETurboEqualizer
from .turbo import run_frame

OUTPUT_ENV = "CTW_TURBO_OUTPUT_DIR"
# RNG stream index of the filter-trajectory frame (SNR indices use 0, 1, ...)
_FILTER_STREAM = 9999
SNR_CONVENTION = "SNR = E|x|^2 ||h||^2 / sigma_n^2; complex noise, sigma_n^2/2 per real dimension"

HEADERS = {
    "ber": ["equalizer", "snr_db", "trial", "iteration", "bit_errors", "n_bits", "ber"],
    "mse": ["equalizer", "snr_db", "trial", "iteration", "mse"],
    "exit": ["equalizer", "snr_db", "kind", "trial", "iteration", "i_a", "i_e"],
    "weights": ["snr_db", "trial", "iteration", "sample", "level", "beta"],
    "tree": ["snr_db", "trial", "iteration", "node", "log_a", "log_b", "w_norm", "f_norm", "centroid_mean"],
    "filters": ["source", "sample", "tap", "real", "imag"],
    "regret": ["seed", "n", "partition", "prior_bits", "partition_loss", "ctw_loss", "bound", "slack"],
    "msegap": ["radius", "gap"],
    "metadata": ["key", "value"],
}


def output_dir(explicit=None):
    """``explicit``, else ``$CTW_TURBO_OUTPUT_DIR``, else ``./results``."""
    path = Path(explicit or os.environ.get(OUTPUT_ENV) or "results")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, kind, rows):
    """Write ``rows`` under the fixed header of ``kind``; floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADERS[kind])
        for row in rows:
            if len(row) != len(HEADERS[kind]):
                raise ValueError(f"{kind} row has {len(row)} fields, expected {len(HEADERS[kind])}")
            writer.writerow([_fmt(v) for v in row])
    return Path(path)


def make_equalizer(name, config, channel):
    """Equalizer called ``name`` configured from ``config``."""
    m = len(config.taps)
    common = dict(mu=config.mu, n1=config.n1, n2=config.n2, channel_length=m, filter_kind=config.filter_kind)
    if name == "mmse-exact":
        return ExactMMSETurboEqualizer(taps=config.taps, sigma_n2=channel.sigma_n2, n1=config.n1, n2=config.n2)
    if name == "mmse-timeavg":
        return TimeAveragedMMSETurboEqualizer(taps=config.taps, sigma_n2=channel.sigma_n2, n1=config.n1, n2=config.n2)
    if name == "lms":
        return LMSTurboEqualizer(**common)
    if name == "fixed-partition":
        return PiecewiseLinearTurboEqualizer(n_regions=config.n_regions, **common)
    if name == "ctw":
        return CTWTurboEqualizer(depth=config.depth, c=config.c, **common)
    raise ValueError(f"unknown equalizer {name!r}")


def frame_rng(config, trial, snr_index):
    return np.random.default_rng([config.seed, trial, snr_index])


@dataclass
class TrialRecord:
    """Rows produced by one (SNR point, trial) pair, keyed by CSV kind."""

    snr_index: int
    trial: int
    rows: dict = field(default_factory=dict)


def run_trial(config, snr_index, trial):
    """Simulate every configured equalizer on one frame."""
    snr = config.snr_db[snr_index]
    channel = ChannelModel.from_snr(config.taps, snr)
    frame = make_frame(channel, config.n_data, config.n_train, frame_rng(config, trial, snr_index))
    rows = {k: [] for k in ("ber", "mse", "exit", "weights", "tree")}
    n_bits = frame.info_bits.size
    for name in config.equalizers:
        snapshots = []

        def snapshot(it, eq, _name=name):
            if _name == "ctw" and it >= 2:
                snapshots.append((it, eq.level_weights_, eq.tree_state_))

        result = run_frame(frame, make_equalizer(name, config, channel), config.n_iter, callback=snapshot)
        for it in range(config.n_iter):
            errors = int(np.sum(result.receiver.predict(it) != frame.info_bits))
            rows["ber"].append([name, snr, trial, it + 1, errors, n_bits, errors / n_bits])
            rows["mse"].append([name, snr, trial, it + 1, float(result.mse[it])])
        for it, (ia, ie) in enumerate(exit_trajectory(result.receiver, frame.data_symbols), start=1):
            rows["exit"].append([name, snr, "trajectory", trial, it, float(ia), float(ie)])
        for it, betas, state in snapshots:
            for sample in range(0, betas.shape[0], config.weight_stride):
                for level, beta in enumerate(betas[sample]):
                    rows["weights"].append([snr, trial, it, sample, level, float(beta)])
            for node in state:
                rows["tree"].append(
                    [snr, trial, it, node["node"], node["log_a"], node["log_b"], node["w_norm"], node["f_norm"], float(np.mean(node["centroid"]))]
                )
    return TrialRecord(snr_index, trial, rows)


def _run_trial_args(args):
    return run_trial(*args)


def simulate(config):
    """All (SNR point, trial) records, ordered by (SNR index, trial)."""
    jobs = [(config, s, t) for s in range(len(config.snr_db)) for t in range(config.trials)]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            records = list(pool.map(_run_trial_args, jobs))
    else:
        records = [run_trial(*job) for job in jobs]
    return sorted(records, key=lambda r: (r.snr_index, r.trial))


def mean_ber(records, equalizer, snr_db, iteration):
    """Trial-averaged BER of ``equalizer`` at ``snr_db`` after ``iteration``."""
    vals = [
        row[6]
        for rec in records
        for row in rec.rows["ber"]
        if row[0] == equalizer and row[1] == snr_db and row[3] == iteration
    ]
    if not vals:
        raise KeyError((equalizer, snr_db, iteration))
    return float(np.mean(vals))


def temporal_spread(W):
    """``sqrt(mean_t ||w(t) - mean_t w||^2)`` for filters stacked along axis 0."""
    W = np.asarray(W)
    return float(np.sqrt(np.mean(np.sum(np.abs(W - W.mean(axis=0)) ** 2, axis=1))))


@dataclass
class FilterDump:
    mmse: np.ndarray
    lms: np.ndarray
    lms_steady: np.ndarray

    @property
    def spread_ratio(self):
        return temporal_spread(self.mmse) / temporal_spread(self.lms_steady)


def filter_trajectories(config, trial=0, steady_fraction=0.2):
    """Feedforward taps at the second iteration on one frame at ``filter_snr_db``.

    Returns the per-symbol exact MMSE filters and the LMS filter in use at every
    data sample; ``lms_steady`` is the final ``steady_fraction`` of the latter,
    after the feedback filter has converged from its fresh start.
    """
    channel = ChannelModel.from_snr(config.taps, config.filter_snr_db)
    frame = make_frame(channel, config.n_data, config.n_train, np.random.default_rng([config.seed, trial, _FILTER_STREAM]))
    mmse = run_frame(frame, make_equalizer("mmse-exact", config, channel), 2).receiver.equalizer_.filters_
    lms_eq = make_equalizer("lms", config, channel).set_params(record=True)
    lms = run_frame(frame, lms_eq, 2).receiver.equalizer_.weight_history_
    start = int(round(lms.shape[0] * (1.0 - steady_fraction)))
    return FilterDump(np.asarray(mmse), lms, lms[start:])


def filter_rows(dump):
    for source, W in (("mmse-exact", dump.mmse), ("lms", dump.lms)):
        for t in range(W.shape[0]):
            for k in range(W.shape[1]):
                yield [source, t, k, float(W[t, k].real), float(W[t, k].imag)]


def metadata_rows(config, extra=None):
    rows = [
        ["package_version", __version__],
        ["config_hash", config.fingerprint()],
        ["snr_convention", SNR_CONVENTION],
        ["taps", ",".join(repr(float(t)) for t in config.taps)],
        ["info_bits_per_frame", str(config.n_data // 2 - 2)],
    ]
    rows += [[k, v] for k, v in (extra or {}).items()]
    return rows


def run_experiment(config, out=None, with_filters=True, with_exit_curves=True):
    """Run the BER/MSE simulation and write every CSV.

    Writes ``ber.csv``, ``mse.csv``, ``exit.csv`` (trajectories plus MMSE
    transfer curves), ``weights.csv``, ``tree.csv``, ``filters.csv`` and
    ``metadata.csv`` to ``out`` (see :func:`output_dir`).

    Returns
    -------
    records : list of TrialRecord
    paths : dict of Path
    """
    out = output_dir(out)
    records = simulate(config)
    paths = {}
    for kind in ("ber", "mse", "weights", "tree"):
        paths[kind] = write_csv(out / f"{kind}.csv", kind, (row for rec in records for row in rec.rows[kind]))
    exit_rows = [row for rec in records for row in rec.rows["exit"]]
    if with_exit_curves:
        exit_rows += exit_curve_rows(config)
    paths["exit"] = write_csv(out / "exit.csv", "exit", exit_rows)
    extra = {}
    if with_filters:
        dump = filter_trajectories(config)
        paths["filters"] = write_csv(out / "filters.csv", "filters", filter_rows(dump))
        extra["filter_spread_ratio"] = repr(dump.spread_ratio)
    paths["metadata"] = write_csv(out / "metadata.csv", "metadata", metadata_rows(config, extra))
    return records, paths


def exit_curve_rows(config, snr_db=None):
    rows = []
    for snr in config.snr_db if snr_db is None else [snr_db]:
        curves = exit_curves(config.taps, snr, config.exit_ia, config.exit_symbols, seed=config.seed, n1=config.n1, n2=config.n2)
        for name, ie in curves.items():
            for ia, val in zip(config.exit_ia, ie):
                rows.append([name, snr, "curve", 0, 0, float(ia), float(val)])
    return rows
