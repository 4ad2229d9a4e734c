"""CSV result files: learning curves, context logs and summaries."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

SCHEMA_LINE = "# aces-result v1"
N_GRID = 16

CURVE_FILE = "learning_curve.csv"
CONTEXT_FILE = "contexts.csv"
SUMMARY_FILE = "summary.csv"
CONFIG_FILE = "config.toml"


def _fmt(x) -> str:
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


def _write(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(SCHEMA_LINE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> list[dict]:
    """Rows of a result CSV as dicts of strings; the schema line is skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise ValueError(f"{path}: expected schema line {SCHEMA_LINE!r}, got {first!r}")
        return list(csv.DictReader(fh))


def curve_rows(results):
    for res in results:
        for episode in sorted(res.evaluations):
            ev = res.evaluations[episode]
            if ev is None:
                yield [res.run, episode, "nan", "nan"] + ["nan"] * N_GRID
            else:
                yield ([res.run, episode, _fmt(ev.mean_performance), _fmt(ev.mean_regret)]
                       + [_fmt(r) for r in ev.regrets])


def context_rows(results):
    for res in results:
        for rec in res.records:
            yield [res.run, rec.episode, _fmt(rec.context[0]), _fmt(rec.context[1]),
                   _fmt(rec.params[0]), _fmt(rec.params[1]), _fmt(rec.observed_return)]


def summarize(curve: list[dict]) -> list[dict]:
    """Mean and standard error (sample std / sqrt(runs)) per evaluation episode."""
    by_episode: dict[int, list] = {}
    for row in curve:
        by_episode.setdefault(int(row["episode"]), []).append(row)
    out = []
    for episode in sorted(by_episode):
        rows = by_episode[episode]
        perf = np.array([float(r["mean_offline_performance"]) for r in rows])
        regret = np.array([float(r["mean_regret"]) for r in rows])
        perf, regret = perf[~np.isnan(perf)], regret[~np.isnan(regret)]
        n = len(perf)
        out.append({
            "episode": episode,
            "n_runs": n,
            "mean": perf.mean() if n else np.nan,
            "std_error": perf.std(ddof=1) / np.sqrt(n) if n > 1 else np.nan,
            "mean_regret": regret.mean() if n else np.nan,
            "regret_std_error": regret.std(ddof=1) / np.sqrt(n) if n > 1 else np.nan,
        })
    return out


CURVE_HEADER = (["run", "episode", "mean_offline_performance", "mean_regret"]
                + [f"regret_{i:02d}" for i in range(N_GRID)])
CONTEXT_HEADER = ["run", "episode", "s_x", "s_y", "tau", "g0", "return"]
SUMMARY_HEADER = ["strategy", "episode", "n_runs", "mean", "std_error",
                  "mean_regret", "regret_std_error"]


def write_config(config, path: Path):
    lines = []
    for key, value in config.as_flat_dict().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, str):
            value = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_results(config, results):
    out = Path(config.output_dir)
    curve = list(curve_rows(results))
    _write(out / CURVE_FILE, CURVE_HEADER, curve)
    _write(out / CONTEXT_FILE, CONTEXT_HEADER, list(context_rows(results)))
    summary = summarize([dict(zip(CURVE_HEADER, map(str, r))) for r in curve])
    _write(out / SUMMARY_FILE, SUMMARY_HEADER,
           [[config.label, s["episode"], s["n_runs"], _fmt(s["mean"]), _fmt(s["std_error"]),
             _fmt(s["mean_regret"]), _fmt(s["regret_std_error"])] for s in summary])
    write_config(config, out / CONFIG_FILE)
    if config.plots:
        from .plotting import plot_contexts, plot_learning_curves
        plot_learning_curves([out], out / "learning_curves.svg")
        plot_contexts(out, out / "contexts.svg")
