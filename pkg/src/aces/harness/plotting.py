"""SVG figures: learning curves with error bands and the context scatter."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..environment import CONTEXT_BOUNDS  # noqa: E402
from .results import CONTEXT_FILE, SUMMARY_FILE, read_csv  # noqa: E402

# fixed salt and no date so repeated renders are byte-identical
matplotlib.rcParams["svg.hashsalt"] = "aces"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def result_dirs(root) -> list[Path]:
    """``root`` itself if it holds a summary, else its subdirectories that do."""
    root = Path(root)
    if (root / SUMMARY_FILE).exists():
        return [root]
    found = sorted(p for p in root.iterdir() if (p / SUMMARY_FILE).exists())
    if not found:
        raise FileNotFoundError(f"no {SUMMARY_FILE} under {root}")
    return found


def plot_learning_curves(dirs, out_path, metric="mean"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in dirs:
        rows = read_csv(Path(d) / SUMMARY_FILE)
        if not rows:
            continue
        ep = np.array([int(r["episode"]) for r in rows])
        err_key = "std_error" if metric == "mean" else "regret_std_error"
        m = np.array([float(r[metric]) for r in rows])
        se = np.nan_to_num(np.array([float(r[err_key]) for r in rows]))
        line, = ax.plot(ep, m, label=rows[0]["strategy"])
        ax.fill_between(ep, m - se, m + se, color=line.get_color(), alpha=0.25)
    ax.set_xlabel("episode")
    ax.set_ylabel("offline performance" if metric == "mean" else "regret")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)


def plot_contexts(result_dir, out_path, run=0):
    rows = read_csv(Path(result_dir) / CONTEXT_FILE)
    S = np.array([[float(r["s_x"]), float(r["s_y"])] for r in rows]).reshape(-1, 2)
    runs = np.array([int(r["run"]) for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(S[:, 0], S[:, 1], s=6, c="tab:blue", alpha=0.4, label="all runs")
    sel = runs == run
    ax.scatter(S[sel, 0], S[sel, 1], s=10, c="tab:red", label=f"run {run}")
    lo, hi = CONTEXT_BOUNDS.lower, CONTEXT_BOUNDS.upper
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_xlabel("target x [m]")
    ax.set_ylabel("target y [m]")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)
