"""Static figures and a text summary from an adaptation log.

Two figures are produced: the label-free drift signals (``d_j`` per inner
iteration and the windowed variance per epoch, with the stopping epoch
marked) and the source/target Dice curves across adaptation.
"""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .exceptions import UsageError  # noqa: E402
from .monitoring import replay  # noqa: E402
from .training import TrainingLog  # noqa: E402

__all__ = ["read_log_notes", "log_config", "summarize", "plot_drift", "plot_dice", "write_report", "summary_text"]

CONFIG_NOTE = "config "


def read_log_notes(path):
    """Comment lines of a training log, without the leading ``# ``."""
    notes = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            notes.append(line[1:].strip())
    return notes


def log_config(path):
    """The training config recorded in a log's header, or None."""
    for note in read_log_notes(path):
        if note.startswith(CONFIG_NOTE):
            return json.loads(note[len(CONFIG_NOTE):])
    return None


def summarize(rows, config):
    """Key numbers of one adaptation run.

    ``config`` needs ``inner_iters``, ``window``, ``eps1``, ``eps2``,
    ``min_adapt_epochs`` and ``max_adapt_epochs``.  The stopping epoch is
    recomputed from the logged drift values so the summary does not trust
    the trainer's own bookkeeping.
    """
    adapt = [r for r in rows if r["phase"] == "adapt"]
    if not adapt:
        raise UsageError("log has no adaptation rows")
    epoch_rows = [r for r in adapt if r["src_dice"] is not None]
    base = next((r for r in epoch_rows if r["epoch"] == 0), None)
    trained = [r for r in epoch_rows if r["epoch"] >= 1]
    d_values = [r["d_j"] for r in adapt if r["d_j"] is not None]
    stop, _ = replay(
        d_values,
        k=config["window"],
        eps1=config["eps1"],
        eps2=config["eps2"],
        min_epochs=config["min_adapt_epochs"],
        per_epoch=config["inner_iters"],
    )
    last_epoch = trained[-1]["epoch"] if trained else 0
    out = {
        "epochs_run": last_epoch,
        "converged": stop is not None,
        "stop_epoch": stop if stop is not None else last_epoch,
        "max_adapt_epochs": config["max_adapt_epochs"],
        "pretrain_src_dice": base["src_dice"] if base else None,
        "pretrain_tgt_dice": base["tgt_dice"] if base else None,
    }
    by_epoch = {r["epoch"]: r for r in trained}
    final = by_epoch.get(out["stop_epoch"])
    out["final_src_dice"] = final["src_dice"] if final else None
    out["final_tgt_dice"] = final["tgt_dice"] if final else None
    tgt = [(r["tgt_dice"], r["epoch"]) for r in epoch_rows if r["tgt_dice"] is not None]
    if tgt:
        best, best_epoch = max(tgt, key=lambda t: (t[0], -t[1]))
        out["best_tgt_dice"], out["best_epoch"] = best, best_epoch
    if base and trained:
        out["max_src_drop"] = max(base["src_dice"] - r["src_dice"] for r in trained)
    return out


def _drift_series(rows, n):
    xs, ds, ep, s2 = [], [], [], []
    for r in rows:
        if r["phase"] != "adapt":
            continue
        if r["d_j"] is not None:
            xs.append(r["epoch"] - 1 + r["inner_iter"] / n)
            ds.append(r["d_j"])
        if r["sigma2"] is not None:
            ep.append(r["epoch"])
            s2.append(r["sigma2"])
    return xs, ds, ep, s2


def plot_drift(rows, config, summary, path):
    xs, ds, ep, s2 = _drift_series(rows, config["inner_iters"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ds, lw=1, color="tab:blue", label="d_j (drift from A0)")
    ax.axhline(config["eps2"], color="tab:blue", ls=":", lw=1, label="eps2")
    ax.set_xlabel("epoch")
    ax.set_ylabel("d_j")
    ax2 = ax.twinx()
    ax2.plot(ep, s2, "o-", ms=3, color="tab:orange", label="sigma^2 (window variance)")
    ax2.axhline(config["eps1"], color="tab:orange", ls=":", lw=1, label="eps1")
    ax2.set_ylabel("sigma^2")
    stop = summary["stop_epoch"]
    label = "stop" if summary["converged"] else "max epochs"
    ax.axvline(stop, color="k", ls="--", lw=1, label=f"{label} (epoch {stop})")
    lines = ax.get_legend_handles_labels()
    lines2 = ax2.get_legend_handles_labels()
    ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_dice(rows, summary, path):
    ep = [r for r in rows if r["phase"] == "adapt" and r["src_dice"] is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot([r["epoch"] for r in ep], [r["src_dice"] for r in ep], "o-", ms=3, label="source (validation)")
    tgt = [r for r in ep if r["tgt_dice"] is not None]
    if tgt:
        ax.plot([r["epoch"] for r in tgt], [r["tgt_dice"] for r in tgt], "s-", ms=3,
                label="target (test, report only)")
    ax.axvline(summary["stop_epoch"], color="k", ls="--", lw=1, label="stop")
    ax.set_xlabel("epoch")
    ax.set_ylabel("Dice")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def summary_text(summary):
    lines = []
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.6f}"
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def write_report(log_path, out_dir):
    """Write ``drift.png``, ``dice.png`` and ``summary.txt``; return the summary."""
    log_path = Path(log_path)
    if not log_path.exists():
        raise UsageError(f"no training log at {log_path}")
    rows = TrainingLog.read(log_path)
    config = log_config(log_path)
    if config is None:
        raise UsageError(f"{log_path} has no config note in its header")
    summary = summarize(rows, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plot_drift(rows, config, summary, out_dir / "drift.png")
    plot_dice(rows, summary, out_dir / "dice.png")
    (out_dir / "summary.txt").write_text(summary_text(summary))
    return summary
