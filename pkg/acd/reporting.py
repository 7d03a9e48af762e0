"""
Reporting — turns finished run directories into one comparison plot.

compare(run_dirs, out_path):
  1. read manifest.json + metrics.csv of every run (missing files are
     collected and reported together)
  2. group runs by algorithm, align rows on global_frame
  3. average mean_return_100 across seeds at each frame (frames where no
     seed has completed an episode yet stay empty)
  4. one curve per algorithm -> out_path; a text summary of the final
     averaged returns -> out_path with a .txt suffix

Output depends only on the input files, so re-running is idempotent.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from .metrics import read_metrics
from .trainer import MANIFEST_FILE, METRICS_FILE, RunManifest

logger = logging.getLogger('acd.reporting')

plt.switch_backend('Agg')

SUMMARY_SUFFIX = '.txt'
PLOT_DPI = 100
# software and date stamps stripped: same inputs, same bytes
STABLE_METADATA = {
    '.png': {'Software': None},
    '.svg': {'Date': None},
    '.pdf': {'CreationDate': None},
}


class CompareError(ValueError):
    def __init__(self, missing):
        self.missing = [str(p) for p in missing]
        super().__init__("Missing run files:\n  " + "\n  ".join(self.missing))


@dataclass
class Curve:
    algorithm: str
    kind: str
    seeds: list
    frames: np.ndarray          # int64, union of every run's frames
    mean_return: np.ndarray     # float64, NaN where no seed has a value

    @property
    def final(self):
        """Last defined point -> (frame, value), or None if no episode ever completed."""
        defined = np.flatnonzero(~np.isnan(self.mean_return))
        if not len(defined):
            return None
        i = defined[-1]
        return int(self.frames[i]), float(self.mean_return[i])


def load_runs(run_dirs):
    runs = []
    missing = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        for name in (MANIFEST_FILE, METRICS_FILE):
            if not (run_dir / name).is_file():
                missing.append(run_dir / name)
    if missing:
        raise CompareError(missing)
    for run_dir in run_dirs:
        runs.append((RunManifest.load(run_dir), read_metrics(Path(run_dir) / METRICS_FILE)))
    return runs


def average_curves(runs):
    """Group (manifest, records) pairs by algorithm and average across seeds frame by frame."""
    grouped = defaultdict(list)
    for manifest, records in runs:
        grouped[manifest.algorithm].append((manifest, records))

    curves = []
    for algorithm in sorted(grouped):
        members = grouped[algorithm]
        frames = np.array(sorted({r.global_frame for _, records in members for r in records}), dtype=np.int64)
        column = {frame: i for i, frame in enumerate(frames)}
        table = np.full((len(members), len(frames)), np.nan)
        for row, (_, records) in enumerate(members):
            for record in records:
                if record.mean_return_100 is not None:
                    table[row, column[record.global_frame]] = record.mean_return_100
        counts = (~np.isnan(table)).sum(axis=0)
        sums = np.nansum(table, axis=0)
        mean = np.divide(sums, counts, out=np.full(len(frames), np.nan), where=counts > 0)
        kinds = sorted({m.kind for m, _ in members})
        curves.append(Curve(algorithm, ','.join(kinds), sorted(m.seed for m, _ in members), frames, mean))
    return curves


def plot_curves(curves, out_path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    for curve in curves:
        label = f"{curve.algorithm.upper()} ({len(curve.seeds)} seed{'s' if len(curve.seeds) != 1 else ''})"
        ax.plot(curve.frames, curve.mean_return, label=label)
    kinds = sorted({c.kind for c in curves})
    ax.set_title(f"Mean return over the last 100 episodes: {', '.join(kinds)}")
    ax.set_xlabel('Frames')
    ax.set_ylabel('Mean return (last 100 episodes)')
    ax.grid(True, alpha=0.3)
    ax.legend(loc='best')
    fig.tight_layout()
    fig.savefig(out_path, dpi=PLOT_DPI, metadata=STABLE_METADATA.get(out_path.suffix.lower(), {}))
    plt.close(fig)
    return out_path


def summary_text(curves):
    lines = ['algorithm,kind,seeds,final_frame,final_mean_return_100']
    for curve in curves:
        if curve.final is not None:
            frame, shown = curve.final[0], f"{curve.final[1]:.6g}"
        else:
            frame, shown = (int(curve.frames[-1]) if len(curve.frames) else 0), ''
        lines.append(f"{curve.algorithm},{curve.kind},{' '.join(str(s) for s in curve.seeds)},{frame},{shown}")
    return '\n'.join(lines) + '\n'


def compare(run_dirs, out_path):
    """Plot one averaged curve per algorithm and write the summary table; returns the summary text."""
    if not run_dirs:
        raise ValueError("compare needs at least one run directory")
    out_path = Path(out_path)

    logger.info("=" * 50)
    logger.info(f"COMPARE {len(run_dirs)} runs -> {out_path}")
    logger.info("=" * 50)

    curves = average_curves(load_runs(run_dirs))
    plot_curves(curves, out_path)
    summary = summary_text(curves)
    out_path.with_suffix(SUMMARY_SUFFIX).write_text(summary)

    for curve in curves:
        logger.info(f"{curve.algorithm}: seeds {curve.seeds}, final {curve.final}")
    return summary
