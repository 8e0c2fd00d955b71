"""``blockdict`` command-line runner.

Every command is a pure function of its config file, input files and seed;
outputs are written under ``--out`` (default: the current directory).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .analysis import block_coherence_stats, coherence_profile, count_above
from .coding import code_atoms, code_blocks
from .config import RunConfig, load_config
from .core import (
    STRUCTURE_MODES,
    BlockStructure,
    ConfigError,
    FormatError,
    InvariantError,
    NumericalError,
    TrainingSet,
    load_dictionary,
    load_training_set,
    save_dictionary,
    save_training_set,
)
from .learning import bksvd_train, ksvd_train, supervised_train
from .synthetic import gen_block_sparse_data, gen_class_benchmark, gen_oracle_dict, intra_block_corr

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

CSV_HELP = """\
output files:
  gen       oracle_dictionary.bdkt (atoms + oracle blocks), train_data.bdkt
            (class-labeled benchmark data when gen_labeled is true)
  train     dictionary.bdkt (atoms, blocks, class labels if supervised), report.jsonl
            with one {"iter", "rel_error", "n_blocks"} object per iteration
  code      codes.bdkt (n_atoms x n_signals coefficient matrix), residuals.csv
  analyze   coherence.csv: rank,corr  (two dictionaries: rank,corr_a,corr_b,
            sorted descending, blank where one profile is shorter);
            coherence_counts.csv: dictionary,threshold,count_above
  exp       <experiment>.csv, columns
              fig5:  experiment_id,trial,intra_corr,block_size,method,recovery
              fig6a: experiment_id,trial,iterations,method,rel_error
              fig6b: experiment_id,trial,snr_db,method,rel_error
              fig6c: experiment_id,trial,block_size,method,rel_error
              fig6d: experiment_id,trial,blocks_per_signal,method,rel_error
            rows sorted by (parameters, method, trial); each group ends with a
            trial=mean row
  classify  classify.csv: trial,rule,dictionary_mode,accuracy (same ordering)

exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure
"""


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args, required=()) -> RunConfig:
    overrides = {
        "rng_seed": getattr(args, "seed", None),
        "structure_mode": getattr(args, "mode", None),
        "trials": getattr(args, "trials", None),
    }
    if args.config is None:
        if required:
            raise ConfigError(f"--config is required (needs key(s): {', '.join(required)})")
        from .config import from_mapping

        return from_mapping({k: v for k, v in overrides.items() if v is not None})
    return load_config(args.config, required, overrides)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_gen(args) -> int:
    rc = _config(args, required=("m", "n_atoms"))
    cfg = rc.experiment
    out = _outdir(args)
    d, b = gen_oracle_dict(rc.oracle(ex.trial_seed(cfg.rng_seed, 0, 0)))
    if rc.gen_labeled:
        ys = gen_class_benchmark(d, b, rc.n_classes, rc.signals_per_class, rc.class_blocks_per_signal,
                                 rc.class_snr_db, ex.trial_seed(cfg.rng_seed, 0, 1))
    else:
        ys = gen_block_sparse_data(d, b, rc.n_signals, rc.blocks_per_signal, ex.trial_seed(cfg.rng_seed, 0, 1))
    save_dictionary(d, b, None, out / "oracle_dictionary.bdkt")
    save_training_set(ys, out / "train_data.bdkt")
    stats = block_coherence_stats(d, b)
    print(f"oracle: m={d.m} n_atoms={d.n_atoms} blocks={b.n_blocks} signals={ys.n_signals}")
    print(f"intra-block mean |corr| = {intra_block_corr(d.atoms, rc.block_size):.4f}")
    print(f"inter-block mean |corr| = {stats.inter_mean:.4f}, max = {stats.inter_max:.4f}, "
          f"top-20 mean = {stats.inter_top_mean:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = _config(args, required=("data_path",))
    cfg = rc.experiment
    out = _outdir(args)
    ys = load_training_set(rc.data_path)
    labels = None
    if cfg.structure_mode in ("sac", "cgc"):
        if rc.dictionary_path:
            d0, _, _ = load_dictionary(rc.dictionary_path)
        else:
            d0, _, _ = ksvd_train(ys, rc.n_atoms, min(cfg.atom_sparsity, ys.m), cfg.ksvd_iterations, cfg.rng_seed)
        d, b, report = bksvd_train(ys, d0, cfg)
    else:
        if ys.class_of_signal is None:
            raise InvariantError(f"{rc.data_path}: mode {cfg.structure_mode} needs class-labeled training data")
        d, b, labels, report = supervised_train(ys, rc.atoms_per_class, cfg)
    save_dictionary(d, b, labels, out / "dictionary.bdkt")
    stream = report.to_jsonl()
    (out / "report.jsonl").write_text(stream)
    sys.stdout.write(stream)
    return EXIT_OK


def cmd_code(args) -> int:
    rc = _config(args, required=("data_path", "dictionary_path"))
    cfg = rc.experiment
    out = _outdir(args)
    ys = load_training_set(rc.data_path)
    d, b, _ = load_dictionary(rc.dictionary_path)
    if b.fully_formed and b.n_blocks > 0:
        res = code_blocks(d, b, ys.signals, min(cfg.block_sparsity, b.n_blocks), cfg.residual_tolerance)
    else:
        res = code_atoms(d, ys.signals, min(cfg.atom_sparsity, d.m, d.n_atoms), cfg.residual_tolerance)
    save_training_set(TrainingSet(res.codes.coefficients), out / "codes.bdkt")
    lines = ["signal,residual_norm"] + [f"{i},{r!r}" for i, r in enumerate(map(float, res.residual_norms))]
    (out / "residuals.csv").write_text("\n".join(lines) + "\n")
    rel = np.linalg.norm(ys.signals - d.atoms @ res.codes.coefficients) / np.linalg.norm(ys.signals)
    print(f"coded {ys.n_signals} signals, relative error {rel:.6g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    rc = _config(args)
    out = _outdir(args)
    dicts = [load_dictionary(p) for p in args.dictionaries]
    profiles = [coherence_profile(d) for d, _, _ in dicts]  # descending
    header = ["rank", "corr"] if len(profiles) == 1 else ["rank", "corr_a", "corr_b"]
    rows = [",".join(header)]
    for k in range(max(p.size for p in profiles)):
        rows.append(",".join([str(k + 1)] + [repr(float(p[k])) if k < p.size else "" for p in profiles]))
    (out / "coherence.csv").write_text("\n".join(rows) + "\n")
    thr = rc.coherence_threshold
    counts = ["dictionary,threshold,count_above"]
    for path, (d, b, _) in zip(args.dictionaries, dicts):
        n = count_above(d, thr)
        counts.append(f"{path},{thr!r},{n}")
        print(f"{path}: {n} atom pairs with |corr| > {thr}")
        if b.fully_formed and b.n_blocks > 0:
            s = block_coherence_stats(d, b)
            print(f"  intra mean {s.intra_mean:.4f}, inter mean {s.inter_mean:.4f}, inter max {s.inter_max:.4f}")
    (out / "coherence_counts.csv").write_text("\n".join(counts) + "\n")
    return EXIT_OK


def cmd_exp(args) -> int:
    rc = _config(args)
    out = _outdir(args)
    rows = ex.run_experiment(args.experiment, rc, progress=_log)
    rows = ex.summarize(args.experiment, rows)
    ex.write_csv(out / f"{args.experiment}.csv", args.experiment, rows)
    for r in rows:
        if r["trial"] == "mean":
            params = " ".join(f"{k}={r[k]}" for k in ex.PARAMS[args.experiment])
            metric = ex.COLUMNS[args.experiment][-1]
            print(f"{params} mean_{metric}={r[metric]:.6g}")
    return EXIT_OK


def cmd_classify(args) -> int:
    rc = _config(args)
    out = _outdir(args)
    rows = ex.summarize("classify", ex.run_classification(rc, progress=_log))
    ex.write_csv(out / "classify.csv", "classify", rows)
    for r in rows:
        if r["trial"] == "mean":
            print(f"rule={r['rule']} dictionary_mode={r['dictionary_mode']} mean_accuracy={r['accuracy']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat JSON config (keys mirror ExperimentConfig)")
    common.add_argument("--seed", type=int, metavar="N", help="master seed (overrides rng_seed)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory (default: .)")
    modes = argparse.ArgumentParser(add_help=False)
    modes.add_argument("--mode", choices=STRUCTURE_MODES, help="structure mode (overrides structure_mode)")
    trials = argparse.ArgumentParser(add_help=False)
    trials.add_argument("--trials", type=int, metavar="N", help="Monte Carlo trials (overrides trials)")

    parser = argparse.ArgumentParser(
        prog="blockdict",
        description="Block-structured dictionary learning experiments.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    kw = dict(formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    sub.add_parser("gen", parents=[common], help="generate an oracle dictionary and a corpus", **kw).set_defaults(
        func=cmd_gen)
    sub.add_parser("train", parents=[common, modes], help="train a dictionary", **kw).set_defaults(func=cmd_train)
    sub.add_parser("code", parents=[common, modes], help="sparse-code a corpus", **kw).set_defaults(func=cmd_code)
    p = sub.add_parser("analyze", parents=[common], help="coherence profile of one or two dictionaries", **kw)
    p.add_argument("dictionaries", nargs="+", metavar="DICT")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("exp", parents=[common, trials], help="run an experiment sweep", **kw)
    p.add_argument("experiment", choices=ex.EXPERIMENTS)
    p.set_defaults(func=cmd_exp)
    sub.add_parser("classify", parents=[common, trials], help="classification benchmark", **kw).set_defaults(
        func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dictionaries", None) and len(args.dictionaries) > 2:
        parser.error("analyze takes one or two dictionaries")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, InvariantError, ValueError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
