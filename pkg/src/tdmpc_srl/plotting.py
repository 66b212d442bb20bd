"""Seed-averaged learning curves rendered as standalone SVG.

Input is one metrics.csv per run. The chosen metric column is read wherever
it is non-empty, runs are averaged per env_step (resampling onto the coarsest
grid when the grids disagree), and the output is a mean curve with a +-1
standard deviation band plus a .summary.csv of the plotted series.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

from .trainer import METRICS_HEADER


class PlotError(ValueError):
    pass


def read_metric_series(path, metric: str = "eval_mean"):
    """(env_steps, values) for rows where the metric column is non-empty."""
    cols = METRICS_HEADER.split(",")
    if metric not in cols:
        raise PlotError(f"unknown metric {metric!r}; expected one of {cols}")
    steps, vals = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(cols) - set(reader.fieldnames or ())
        if missing:
            raise PlotError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            cell = row[metric]
            if cell != "":
                steps.append(int(row["env_step"]))
                vals.append(float(cell))
    if not steps:
        raise PlotError(f"{path}: no rows carry metric {metric!r}")
    return np.asarray(steps, dtype=np.float64), np.asarray(vals, dtype=np.float64)


def align_series(series):
    """Common grid for several (steps, values) series.

    Identical grids pass through untouched. Otherwise everything is linearly
    resampled onto the coarsest grid (the one with the fewest points) and a
    warning goes to stderr. Returns (grid, matrix runs x grid, resampled?).
    """
    grids = [s for s, _ in series]
    target = min(grids, key=len)
    same = all(len(g) == len(target) and np.array_equal(g, target) for g in grids)
    if same:
        return target, np.stack([v for _, v in series]), False
    print(f"warning: eval grids differ across runs; resampling onto the "
          f"coarsest grid ({len(target)} points)", file=sys.stderr)
    rows = [np.interp(target, s, v) for s, v in series]
    return target, np.stack(rows), True


def summarize_series(matrix: np.ndarray):
    """Per-step mean and population std across runs."""
    return matrix.mean(axis=0), matrix.std(axis=0)


# -- SVG rendering ------------------------------------------------------------

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 74, 24, 36, 56


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    raw = (hi - lo) / max(n, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0)), key=lambda m: abs(m * mag - raw)) * mag
    first = np.ceil(lo / step) * step
    ticks = np.arange(first, hi + step * 1e-9, step)
    return [float(t) for t in ticks]


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.6g}"


def render_svg(grid, mean, std, metric: str, n_runs: int) -> str:
    grid = np.asarray(grid, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    x_lo, x_hi = float(grid.min()), float(grid.max())
    y_lo = float((mean - std).min())
    y_hi = float((mean + std).max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y):
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    def pts(xs, ys):
        return " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>']
    for t in _nice_ticks(x_lo, x_hi):
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{_MT}" x2="{x:.2f}" y2="{_H - _MB}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{x:.2f}" y="{_H - _MB + 18}" font-size="12" '
                   f'text-anchor="middle" fill="#444444">{_fmt(t)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_W - _MR}" y2="{y:.2f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-size="12" '
                   f'text-anchor="end" fill="#444444">{_fmt(t)}</text>')
    band = pts(grid, mean + std) + " " + pts(grid[::-1], (mean - std)[::-1])
    out.append(f'<polygon points="{band}" fill="#3b6ea5" fill-opacity="0.22" '
               f'stroke="none"/>')
    out.append(f'<polyline points="{pts(grid, mean)}" fill="none" '
               f'stroke="#3b6ea5" stroke-width="2"/>')
    if len(grid) == 1:
        out.append(f'<circle cx="{px(grid[0]):.2f}" cy="{py(mean[0]):.2f}" r="3" '
                   f'fill="#3b6ea5"/>')
    out.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="#888888"/>')
    out.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 14}" font-size="13" '
               f'text-anchor="middle" fill="#222222">env_step</text>')
    out.append(f'<text x="20" y="{(_MT + _H - _MB) / 2}" font-size="13" '
               f'text-anchor="middle" fill="#222222" '
               f'transform="rotate(-90 20 {(_MT + _H - _MB) / 2})">{metric}</text>')
    out.append(f'<text x="{(_ML + _W - _MR) / 2}" y="22" font-size="14" '
               f'text-anchor="middle" fill="#222222">{metric} over {n_runs} '
               f'run{"s" if n_runs != 1 else ""} (mean, +-1 std)</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def summary_path(out_svg) -> Path:
    return Path(out_svg).with_suffix(".summary.csv")


def plot_runs(metric_files, out_svg, metric: str = "eval_mean"):
    """Render the averaged curve of `metric` across runs; writes the SVG and
    a sibling .summary.csv (env_step, mean, std). Returns both paths."""
    files = [Path(p) for p in metric_files]
    if not files:
        raise PlotError("no metrics files given")
    series = [read_metric_series(p, metric) for p in files]
    grid, matrix, _ = align_series(series)
    mean, std = summarize_series(matrix)
    out_svg = Path(out_svg)
    out_svg.parent.mkdir(parents=True, exist_ok=True)
    out_svg.write_text(render_svg(grid, mean, std, metric, len(files)),
                       encoding="utf-8")
    sp = summary_path(out_svg)
    with open(sp, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"env_step,{metric}_mean,{metric}_std\n")
        for g, m, s in zip(grid, mean, std):
            f.write(f"{int(g)},{float(m)!r},{float(s)!r}\n")
    return out_svg, sp
