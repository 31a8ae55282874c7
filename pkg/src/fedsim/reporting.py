"""CSV and figure output for experiment batches.

All CSVs are UTF-8 with a header row, '.' decimal separator, and rows
sorted by (method, seed, round, client_id), so identical configs rerun
to byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .federation import MetricsLog  # noqa: E402

ROUNDS_HEADER = [
    "round",
    "method",
    "seed",
    "mean_accuracy",
    "mean_train_loss",
    "n_sampled",
    "params_transmitted_cumulative",
]
CLIENTS_HEADER = ["round", "method", "seed", "client_id", "test_accuracy"]
SUMMARY_HEADER = ["method", "n_seeds", "best_mean_accuracy_mean", "best_mean_accuracy_std"]


@dataclass
class RunResult:
    """Metrics of one (method, seed) run."""

    method: str
    seed: int
    metrics: MetricsLog


def _sorted_runs(runs: list[RunResult]) -> list[RunResult]:
    return sorted(runs, key=lambda r: (r.method, r.seed))


def write_rounds_csv(runs: list[RunResult], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROUNDS_HEADER)
        for run in _sorted_runs(runs):
            for rec in run.metrics.records:
                writer.writerow(
                    [
                        rec.round,
                        run.method,
                        run.seed,
                        repr(rec.mean_accuracy),
                        repr(rec.mean_train_loss),
                        len(rec.sampled),
                        rec.params_transmitted,
                    ]
                )


def write_clients_csv(runs: list[RunResult], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CLIENTS_HEADER)
        for run in _sorted_runs(runs):
            for rec in run.metrics.records:
                for cid in sorted(rec.client_accuracy):
                    writer.writerow(
                        [rec.round, run.method, run.seed, cid, repr(rec.client_accuracy[cid])]
                    )


def summarize(runs: list[RunResult]) -> list[tuple[str, int, float, float]]:
    """Per method: (method, n_seeds, mean of best accuracy, sample std)."""
    by_method: dict[str, list[float]] = {}
    for run in runs:
        by_method.setdefault(run.method, []).append(run.metrics.best_mean_accuracy)
    rows = []
    for method in sorted(by_method):
        vals = by_method[method]
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append((method, len(vals), float(np.mean(vals)), std))
    return rows


def write_summary_csv(runs: list[RunResult], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for method, n, mean, std in summarize(runs):
            writer.writerow([method, n, repr(mean), repr(std)])


def plot_curves(runs: list[RunResult], path: Path) -> None:
    """Line chart of mean test accuracy vs round, one line per method
    (averaged over seeds at each evaluated round)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in sorted({r.method for r in runs}):
        per_round: dict[int, list[float]] = {}
        for run in runs:
            if run.method != method:
                continue
            for rec in run.metrics.records:
                per_round.setdefault(rec.round, []).append(rec.mean_accuracy)
        xs = sorted(per_round)
        ys = [float(np.mean(per_round[x])) for x in xs]
        ax.plot(xs, ys, label=method, linewidth=1.5)
    ax.set_xlabel("round")
    ax.set_ylabel("mean test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "fedsim"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_all(runs: list[RunResult], output_dir: Path, plot: bool = True) -> list[Path]:
    """Write every report file; returns the paths written."""
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, writer in [
        ("rounds.csv", write_rounds_csv),
        ("clients.csv", write_clients_csv),
        ("summary.csv", write_summary_csv),
    ]:
        target = output_dir / name
        writer(runs, target)
        written.append(target)
    if plot:
        target = output_dir / "curves.svg"
        plot_curves(runs, target)
        written.append(target)
    return written
