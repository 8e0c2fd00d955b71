"""Seeded Monte Carlo sweeps behind the ``exp`` and ``classify`` commands.

Each trial draws a fresh oracle dictionary and corpus from seeds split off
the master seed by (trial, purpose) counters, so trials are independent and
any subset can be recomputed on its own. Results are plain row dicts;
:func:`summarize` appends per-group means and :func:`write_csv` fixes the
row order and number formatting so re-runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import replace
from typing import Callable, Iterable

import numpy as np

from .analysis import block_recovery_rate, reconstruction_error
from .classify import accuracy, cds_accuracy, classify_batch
from .coding import code_atoms
from .config import RunConfig
from .core import TrainingSet
from .learning import bksvd_train, ksvd_train, supervised_train
from .structure import cgc_estimate, sac_estimate
from .synthetic import add_noise_snr, gen_block_sparse_data, gen_class_benchmark, gen_oracle_dict

METHODS = ("cgc", "sac")
EXPERIMENTS = ("fig5", "fig6a", "fig6b", "fig6c", "fig6d")

# purposes for seed derivation
_ORACLE, _DATA, _NOISE, _INIT, _TEST, _SUPERVISED = range(6)

COLUMNS = {
    "fig5": ("experiment_id", "trial", "intra_corr", "block_size", "method", "recovery"),
    "fig6a": ("experiment_id", "trial", "iterations", "method", "rel_error"),
    "fig6b": ("experiment_id", "trial", "snr_db", "method", "rel_error"),
    "fig6c": ("experiment_id", "trial", "block_size", "method", "rel_error"),
    "fig6d": ("experiment_id", "trial", "blocks_per_signal", "method", "rel_error"),
    "classify": ("trial", "rule", "dictionary_mode", "accuracy"),
}
PARAMS = {
    "fig5": ("intra_corr", "block_size", "method"),
    "fig6a": ("iterations", "method"),
    "fig6b": ("snr_db", "method"),
    "fig6c": ("block_size", "method"),
    "fig6d": ("blocks_per_signal", "method"),
    "classify": ("rule", "dictionary_mode"),
}


def trial_seed(master: int, trial: int, purpose: int, *extra: int) -> int:
    """Counter-based split of the master seed."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=(trial, purpose, *extra))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# fig5: exact block recovery on oracle dictionaries


def fig5_trial(rc: RunConfig, trial: int, intra_corr: float, block_size: int, methods=METHODS) -> dict:
    """Recovery of the oracle partition by CGC (from atoms) and SAC (from OMP supports)."""
    cfg = rc.experiment
    key = (int(round(intra_corr * 1000)), block_size)
    d, oracle = gen_oracle_dict(rc.oracle(trial_seed(cfg.rng_seed, trial, _ORACLE, *key), block_size, intra_corr))
    out = {}
    if "cgc" in methods:
        out["cgc"] = block_recovery_rate(cgc_estimate(d, block_size, cfg.shrink_fraction), oracle)
    if "sac" in methods:
        p = min(rc.blocks_per_signal, oracle.n_blocks)
        ys = gen_block_sparse_data(d, oracle, rc.n_signals, p, trial_seed(cfg.rng_seed, trial, _DATA, *key))
        codes = code_atoms(d, ys.signals, min(p * block_size, d.m)).codes
        out["sac"] = block_recovery_rate(sac_estimate(d, codes, block_size), oracle)
    return out


def run_fig5(rc: RunConfig, methods=METHODS, progress: Callable = None) -> list:
    rows = []
    for corr in rc.fig5_intra_corrs:
        for bs in rc.fig5_block_sizes:
            for t in range(rc.experiment.trials):
                for method, value in fig5_trial(rc, t, corr, bs, methods).items():
                    rows.append(dict(experiment_id="fig5", trial=t, intra_corr=corr, block_size=bs,
                                     method=method, recovery=value))
            if progress:
                progress(f"fig5 intra_corr={corr} block_size={bs}")
    return rows


# ---------------------------------------------------------------------------
# fig6: reconstruction error of learned dictionaries


def _corpus(rc: RunConfig, trial: int, blocks_per_signal: int, tag: int = 0) -> TrainingSet:
    cfg = rc.experiment
    d, b = gen_oracle_dict(rc.oracle(trial_seed(cfg.rng_seed, trial, _ORACLE)))
    return gen_block_sparse_data(d, b, rc.n_signals, blocks_per_signal, trial_seed(cfg.rng_seed, trial, _DATA, tag))


def _init(rc: RunConfig, ys: TrainingSet, trial: int, tag: int = 0):
    cfg = rc.experiment
    d0, _, _ = ksvd_train(ys, rc.n_atoms, min(cfg.atom_sparsity, ys.m), cfg.ksvd_iterations,
                          trial_seed(cfg.rng_seed, trial, _INIT, tag))
    return d0


def _train(rc: RunConfig, ys, d0, method: str, checkpoint=None, **changes):
    cfg = replace(rc.experiment, structure_mode=method, structure_update_period=None, **changes)
    return bksvd_train(ys, d0, cfg, checkpoint=checkpoint)


def fig6a_trial(rc: RunConfig, trial: int, methods=METHODS) -> dict:
    """{method: {iterations: error}} at the grid's iteration counts, for one trial."""
    cfg = rc.experiment
    ys = _corpus(rc, trial, rc.blocks_per_signal)
    d0 = _init(rc, ys, trial)
    wanted = set(rc.fig6a_iterations)
    out = {}
    for method in methods:
        errs = {}

        def keep(it, d, b):
            if it in wanted:
                errs[it] = reconstruction_error(ys, d, b, min(cfg.block_sparsity, b.n_blocks))

        _train(rc, ys, d0, method, keep, outer_iterations=max(wanted))
        out[method] = errs
    return out


def fig6b_trial(rc: RunConfig, trial: int, methods=METHODS) -> dict:
    """{(snr, method): error of the dictionary trained on noisy data, measured on clean data}."""
    cfg = rc.experiment
    clean = _corpus(rc, trial, rc.blocks_per_signal)
    out = {}
    for k, snr in enumerate(rc.fig6b_snrs):
        noisy = add_noise_snr(clean, snr, trial_seed(cfg.rng_seed, trial, _NOISE, k))
        d0 = _init(rc, noisy, trial, k)
        for method in methods:
            d, b, _ = _train(rc, noisy, d0, method)
            out[(snr, method)] = reconstruction_error(clean, d, b, min(cfg.block_sparsity, b.n_blocks))
    return out


def fig6c_trial(rc: RunConfig, trial: int, methods=METHODS) -> dict:
    """{(learned block size, method): error} on one fixed corpus and initializer."""
    cfg = rc.experiment
    ys = _corpus(rc, trial, rc.blocks_per_signal)
    d0 = _init(rc, ys, trial)
    out = {}
    for bs in rc.fig6c_block_sizes:
        for method in methods:
            d, b, _ = _train(rc, ys, d0, method, max_block_size=bs)
            out[(bs, method)] = reconstruction_error(ys, d, b, min(cfg.block_sparsity, b.n_blocks))
    return out


def fig6d_trial(rc: RunConfig, trial: int, methods=METHODS) -> dict:
    """{(p*, method): error} with a fresh corpus per number of generating blocks."""
    cfg = rc.experiment
    out = {}
    for p in rc.fig6d_blocks_per_signal:
        ys = _corpus(rc, trial, p, tag=p)
        d0 = _init(rc, ys, trial, p)
        for method in methods:
            d, b, _ = _train(rc, ys, d0, method)
            out[(p, method)] = reconstruction_error(ys, d, b, min(cfg.block_sparsity, b.n_blocks))
    return out


def run_fig6(name: str, rc: RunConfig, methods=METHODS, progress: Callable = None) -> list:
    rows = []
    param = PARAMS[name][0]
    for t in range(rc.experiment.trials):
        if name == "fig6a":
            res = fig6a_trial(rc, t, methods)
            items = [((it, m), e) for m, errs in res.items() for it, e in errs.items()]
        else:
            items = list({"fig6b": fig6b_trial, "fig6c": fig6c_trial, "fig6d": fig6d_trial}[name](rc, t, methods).items())
        for (value, method), err in items:
            rows.append({"experiment_id": name, "trial": t, param: value, "method": method, "rel_error": err})
        if progress:
            progress(f"{name} trial {t + 1}/{rc.experiment.trials}")
    return rows


def run_experiment(name: str, rc: RunConfig, progress: Callable = None) -> list:
    if name == "fig5":
        return run_fig5(rc, progress=progress)
    if name in EXPERIMENTS:
        return run_fig6(name, rc, progress=progress)
    raise ValueError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")


# ---------------------------------------------------------------------------
# classification benchmark


def classification_trial(rc: RunConfig, trial: int) -> list:
    """Accuracies of supervised CGC-BKSVD, unsupervised CGC-BKSVD and KSVD on one labeled corpus.

    All three dictionaries have ``n_classes * atoms_per_class`` atoms. CDS
    (per-class mean-code templates) applies to every dictionary; the
    residual and energy rules need class-labeled atoms and are reported for
    the supervised dictionary only.
    """
    cfg = rc.experiment
    n_atoms = rc.n_classes * rc.atoms_per_class
    d_or, b_or = gen_oracle_dict(rc.oracle(trial_seed(cfg.rng_seed, trial, _ORACLE)))
    args = (d_or, b_or, rc.n_classes)
    train = gen_class_benchmark(*args, rc.signals_per_class, rc.class_blocks_per_signal, rc.class_snr_db,
                                trial_seed(cfg.rng_seed, trial, _DATA))
    test = gen_class_benchmark(*args, rc.test_signals_per_class, rc.class_blocks_per_signal, rc.class_snr_db,
                               trial_seed(cfg.rng_seed, trial, _TEST))

    sup_cfg = replace(cfg, structure_mode="supervised_cgc", structure_update_period=None,
                      rng_seed=trial_seed(cfg.rng_seed, trial, _SUPERVISED))
    d_sup, b_sup, labels, _ = supervised_train(train, rc.atoms_per_class, sup_cfg)
    d_ksvd, _, _ = ksvd_train(train, n_atoms, min(cfg.atom_sparsity, train.m), cfg.ksvd_iterations,
                              trial_seed(cfg.rng_seed, trial, _INIT))
    d_cgc, b_cgc, _ = bksvd_train(train, d_ksvd, replace(cfg, structure_mode="cgc", structure_update_period=None))

    rows = [
        ("cds", "supervised_cgc", cds_accuracy(d_sup, b_sup, train, test, cfg.block_sparsity)),
        ("cds", "cgc", cds_accuracy(d_cgc, b_cgc, train, test, cfg.block_sparsity)),
        ("cds", "ksvd", cds_accuracy(d_ksvd, None, train, test, cfg.atom_sparsity)),
    ]
    for rule in ("residual", "energy"):
        predicted = classify_batch(d_sup, b_sup, labels, test.signals, cfg.block_sparsity, rule)
        rows.append((rule, "supervised_cgc", accuracy(predicted, test.class_of_signal)))
    return [dict(trial=trial, rule=r, dictionary_mode=m, accuracy=a) for r, m, a in rows]


def run_classification(rc: RunConfig, progress: Callable = None) -> list:
    rows = []
    for t in range(rc.experiment.trials):
        rows.extend(classification_trial(rc, t))
        if progress:
            progress(f"classify trial {t + 1}/{rc.experiment.trials}")
    return rows


# ---------------------------------------------------------------------------
# aggregation and output


def _metric(name: str) -> str:
    return COLUMNS[name][-1]


def means(name: str, rows: Iterable[dict]) -> dict:
    """Mean metric per parameter tuple."""
    groups: dict = {}
    for r in rows:
        if r["trial"] == "mean":
            continue
        groups.setdefault(tuple(r[k] for k in PARAMS[name]), []).append(r[_metric(name)])
    return {k: float(np.mean(v)) for k, v in groups.items()}


def summarize(name: str, rows: list) -> list:
    """Per-trial rows followed, within every parameter group, by a ``trial == "mean"`` row."""
    out = list(rows)
    for key, value in means(name, rows).items():
        row = dict(zip(PARAMS[name], key))
        row["trial"] = "mean"
        row[_metric(name)] = value
        if "experiment_id" in COLUMNS[name]:
            row["experiment_id"] = name
        out.append(row)
    return out


def _sort_key(name: str):
    def key(r):
        params = tuple((0, v) if isinstance(v, (int, float)) else (1, str(v)) for v in (r[k] for k in PARAMS[name]))
        t = r["trial"]
        return params, (1, 0) if t == "mean" else (0, t)

    return key


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def to_csv(name: str, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[name])
    for r in sorted(rows, key=_sort_key(name)):
        w.writerow([_fmt(r[c]) for c in COLUMNS[name]])
    return buf.getvalue()


def write_csv(path, name: str, rows: list) -> None:
    with open(path, "w", newline="") as f:
        f.write(to_csv(name, rows))
