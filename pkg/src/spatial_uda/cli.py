"""Command-line harness: ``spatial-uda <command> [options]``.

Commands and what they write under ``--out DIR``:

``gen-data``  ``data/manifest.txt`` and ``data/samples/*.smp``
``pretrain``  ``pretrain/pretrain.ckpt``, ``pretrain/a0.npy``, ``pretrain/pretrain_log.csv``
``adapt``     ``adapt/adapt_log.csv``, ``adapt/latest.ckpt``, ``adapt/final.ckpt``
``eval``      ``eval/<split>.csv`` (per-sample rows, then a ``mean`` row)
``ablate``    ``ablate/ablation.csv``, ``ablate/summary.txt`` and per-run logs
``report``    ``report/drift.png``, ``report/dice.png``, ``report/summary.txt``

Exit status: 0 on success (for ``adapt``: the stopping rule fired),
3 when ``adapt`` reached ``max_adapt_epochs`` without the rule firing,
2 for usage or configuration errors and 1 for any other failure.

Log verbosity is read from the ``SPATIAL_UDA_LOG_LEVEL`` environment
variable (``DEBUG``, ``INFO``, ``WARNING``...; default ``WARNING``).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import load_config
from .data_synth import make_benchmark
from .evaluation import aggregate, eval_csv, score_masks
from .exceptions import ConfigError, UsageError
from .report import CONFIG_NOTE, summarize, write_report
from .sample_io import Manifest, load_split
from .spatial_encoding import discriminator_channels
from .training import (
    STOP_RULE_NOTE,
    TrainingData,
    TrainingLog,
    load_state,
    predict_proba,
    pretrain,
    run_uda,
    save_state,
    with_encoding,
)

log = logging.getLogger("spatial_uda")

ENV_LOG_LEVEL = "SPATIAL_UDA_LOG_LEVEL"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3

REPORT_ONLY_NOTE = "tgt_dice is report-only: computed from held-out target labels, never used for training"

ABLATION_COLUMNS = (
    "seed",
    "variant",
    "encoding",
    "disc_channels",
    "pretrain_src_dice",
    "pretrain_tgt_dice",
    "final_tgt_dice",
    "final_tgt_h95",
    "best_tgt_dice",
    "stop_epoch",
    "converged",
    "max_src_drop",
)


def _notes(train_config):
    config_json = json.dumps(asdict(train_config), sort_keys=True)
    return (STOP_RULE_NOTE, REPORT_ONLY_NOTE, CONFIG_NOTE + config_json)


# ---------------------------------------------------------------------------
# data


def _training_data(samples_by_split):
    return TrainingData.from_samples(
        samples_by_split["src-train"],
        samples_by_split["tgt-adapt"],
        samples_by_split.get("src-val"),
        samples_by_split.get("tgt-test"),
    )


def _load_dataset(cfg, out):
    data_dir = cfg.resolve_data_dir(out)
    manifest_path = data_dir / "manifest.txt"
    if not manifest_path.exists():
        raise UsageError(f"no dataset at {data_dir}; run gen-data first")
    manifest = Manifest.read(manifest_path)
    if manifest.seed != cfg.seed:
        raise UsageError(f"dataset at {data_dir} was generated with seed {manifest.seed}, config seed is {cfg.seed}")
    splits = {name: load_split(data_dir, name) for name in ("src-train", "src-val", "tgt-adapt", "tgt-test")}
    return _training_data(splits)


def _memory_dataset(cfg, seed):
    manifest, samples = make_benchmark(seed, layout=cfg.layout)
    splits = {}
    for e in manifest.entries:
        splits.setdefault(e.split, []).append(samples[e.sample_id])
    return _training_data(splits)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg, out):
    """Write the benchmark for ``cfg.seed`` under the data directory."""
    data_dir = cfg.resolve_data_dir(out)
    manifest, _ = make_benchmark(cfg.seed, data_dir, cfg.layout)
    counts = manifest.counts()
    for (domain, split), n in sorted(counts.items()):
        print(f"{split}\t{domain}\t{n}")
    return manifest


def _pretrain_into(data, train_cfg, run_dir):
    run_dir.mkdir(parents=True, exist_ok=True)
    tl = TrainingLog(notes=_notes(train_cfg), path=run_dir / "pretrain_log.csv")
    state = pretrain(data, train_cfg, tl)
    save_state(run_dir / "pretrain.ckpt", state)
    np.save(run_dir / "a0.npy", state.monitor.A0)
    return state


def cmd_pretrain(cfg, out):
    data = _load_dataset(cfg, out)
    state = _pretrain_into(data, cfg.train, Path(out) / "pretrain")
    print(f"pretrain_src_dice\t{state.pretrain_src_dice!r}")
    return state


def _adapt_config(cfg, state, checkpoint):
    """Training config for adaptation: the file's settings, the checkpoint's architecture."""
    arch = ("dtype", "gen_levels", "gen_base_filters", "gen_convs_per_level")
    mismatched = [k for k in arch if getattr(cfg.train, k) != getattr(state.config, k)]
    if mismatched:
        raise UsageError(f"{checkpoint}: architecture fields {mismatched} differ from the config")
    return cfg.train


def _adapt_into(state, data, run_dir):
    run_dir.mkdir(parents=True, exist_ok=True)
    tl = TrainingLog(notes=_notes(state.config), path=run_dir / "adapt_log.csv")
    return run_uda(state, data, tl, checkpoint_dir=run_dir)


def cmd_adapt(cfg, out, checkpoint=None):
    checkpoint = Path(checkpoint) if checkpoint else Path(out) / "pretrain" / "pretrain.ckpt"
    if not checkpoint.exists():
        raise UsageError(f"no checkpoint at {checkpoint}; run pretrain first")
    state, _ = load_state(checkpoint)
    if state.monitor is None:
        raise UsageError(f"{checkpoint} holds no frozen A0; it is not a pretraining checkpoint")
    train_cfg = _adapt_config(cfg, state, checkpoint)
    if train_cfg.encoding != state.config.encoding:
        state = with_encoding(state, train_cfg.encoding)
    state.config = train_cfg
    mon = state.monitor
    mon.k, mon.eps1, mon.eps2, mon.min_epochs = train_cfg.window, train_cfg.eps1, train_cfg.eps2, train_cfg.min_adapt_epochs
    data = _load_dataset(cfg, out)
    result = _adapt_into(state, data, Path(out) / "adapt")
    status = "stopped" if result.converged else "max-epochs"
    print(f"{status}\tepoch {result.stop_epoch}")
    return result


def cmd_eval(cfg, out, checkpoint=None, split="tgt-test"):
    checkpoint = Path(checkpoint) if checkpoint else Path(out) / "adapt" / "final.ckpt"
    if not checkpoint.exists():
        raise UsageError(f"no checkpoint at {checkpoint}")
    state, _ = load_state(checkpoint)
    data_dir = cfg.resolve_data_dir(out)
    if not (data_dir / "manifest.txt").exists():
        raise UsageError(f"no dataset at {data_dir}; run gen-data first")
    samples = load_split(data_dir, split)
    unlabeled = [s.sample_id for s in samples if s.mask is None]
    if unlabeled or not samples:
        raise UsageError(f"split {split} is unlabeled or empty; evaluation needs ground-truth masks")
    rows = evaluate_samples(state.gen, state.config.gen_config(), samples)
    path = Path(out) / "eval" / f"{split}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(eval_csv(rows))
    agg = aggregate(rows)
    print("\t".join(f"{k}={agg[k]!r}" for k in ("dsc", "h95", "avd", "recall", "f1")))
    return rows


def evaluate_samples(gen_params, gen_config, samples):
    data = TrainingData.from_samples(samples, samples[:1])
    P = (predict_proba(gen_params, data.Xs, gen_config) >= 0.5).astype(np.uint8)
    return score_masks([s.sample_id for s in samples], [s.domain_id for s in samples], [s.mask for s in samples], P)


def _target_test_rows(state, data):
    P = (predict_proba(state.gen, data.Xe, state.config.gen_config()) >= 0.5).astype(np.uint8)
    ids = [str(i) for i in range(len(P))]
    return score_masks(ids, [""] * len(ids), data.Ye.astype(np.uint8), P)


def run_ablation_seed(cfg, seed, out):
    """Pretrain once for ``seed``, then adapt with every configured encoding."""
    cfg = cfg.with_seed(seed)
    data = _memory_dataset(cfg, seed)
    seed_dir = Path(out) / "ablate" / f"seed{seed}"
    t0 = time.process_time()
    base = _pretrain_into(data, cfg.train, seed_dir)
    pretrain_cpu = time.process_time() - t0
    rows = []
    for variant in cfg.encodings:
        state = with_encoding(base, variant)
        t0 = time.process_time()
        result = _adapt_into(state, data, seed_dir / variant)
        adapt_cpu = time.process_time() - t0
        summary = summarize(result.log.rows, asdict(state.config))
        agg = aggregate(_target_test_rows(result.state, data))
        rows.append(
            {
                "seed": seed,
                "variant": variant,
                "encoding": variant,
                "disc_channels": discriminator_channels(variant),
                "pretrain_src_dice": summary["pretrain_src_dice"],
                "pretrain_tgt_dice": summary["pretrain_tgt_dice"],
                "final_tgt_dice": summary["final_tgt_dice"],
                "final_tgt_h95": agg["h95"],
                "best_tgt_dice": summary["best_tgt_dice"],
                "stop_epoch": summary["stop_epoch"],
                "converged": summary["converged"],
                "max_src_drop": summary["max_src_drop"],
                # CPU seconds; kept out of the CSV so outputs stay byte-identical
                "pretrain_cpu_s": pretrain_cpu,
                "adapt_cpu_s": adapt_cpu,
            }
        )
        log.info("ablation seed %d %s: %s", seed, variant, rows[-1])
    return rows


def ablation_summary(rows, variants):
    means = {}
    for v in variants:
        vals = [r["final_tgt_dice"] for r in rows if r["variant"] == v]
        means[v] = float(np.mean(vals))
    lines = [f"mean_tgt_dice[{v}]: {means[v]:.6f}" for v in variants]
    chain = all(means[a] <= means[b] for a, b in zip(variants, variants[1:]))
    lines.append(f"monotone_chain: {chain}")
    return means, "\n".join(lines) + "\n"


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def cmd_ablate(cfg, out, seeds=None):
    seeds = list(seeds or cfg.seeds)
    rows = []
    for seed in seeds:
        rows.extend(run_ablation_seed(cfg, seed, out))
    out_dir = Path(out) / "ablate"
    _write_rows(out_dir / "ablation.csv", ABLATION_COLUMNS, rows)
    _, text = ablation_summary(rows, cfg.encodings)
    (out_dir / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return rows


def cmd_report(out, log_path=None):
    log_path = Path(log_path) if log_path else Path(out) / "adapt" / "adapt_log.csv"
    summary = write_report(log_path, Path(out) / "report")
    for key in ("converged", "stop_epoch", "pretrain_tgt_dice", "final_tgt_dice", "best_tgt_dice"):
        print(f"{key}\t{summary.get(key)}")
    return summary


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="spatial-uda", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, split=False):
        p.add_argument("--config", type=Path, help="YAML experiment config (default: built-in defaults)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, required=True, help="run directory")
        if checkpoint:
            p.add_argument("--checkpoint", type=Path, help="checkpoint to start from")
        if split:
            p.add_argument("--split", choices=("src-val", "tgt-test"), default="tgt-test")
        return p

    common(sub.add_parser("gen-data", help="generate the synthetic benchmark"))
    common(sub.add_parser("pretrain", help="supervised pre-training on the source domains"))
    common(sub.add_parser("adapt", help="adversarial adaptation with monitored stopping"), checkpoint=True)
    common(sub.add_parser("eval", help="score a checkpoint on a labeled split"), checkpoint=True, split=True)
    common(sub.add_parser("ablate", help="encoding ablation over the configured seeds"))
    rep = common(sub.add_parser("report", help="plots and summary from an adaptation log"))
    rep.add_argument("--log", type=Path, help="adaptation log (default: <out>/adapt/adapt_log.csv)")
    return parser


def _configure_logging():
    level = os.environ.get(ENV_LOG_LEVEL, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"{ENV_LOG_LEVEL}={level!r} is not a logging level")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        if args.command == "report":
            cmd_report(args.out, args.log)
            return EXIT_OK
        cfg = _experiment(args)
        if args.command == "gen-data":
            cmd_gen_data(cfg, args.out)
        elif args.command == "pretrain":
            cmd_pretrain(cfg, args.out)
        elif args.command == "adapt":
            result = cmd_adapt(cfg, args.out, args.checkpoint)
            return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE
        elif args.command == "eval":
            cmd_eval(cfg, args.out, args.checkpoint, args.split)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.out, [args.seed] if args.seed is not None else None)
        return EXIT_OK
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - surface any failure as a diagnostic + exit code
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
