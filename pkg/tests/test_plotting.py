"""Metric-curve plotting: series extraction, grid alignment, band algebra,
and the SVG/summary artifact pair."""

import numpy as np
import pytest

from tdmpc_srl.plotting import (
    PlotError,
    align_series,
    plot_runs,
    read_metric_series,
    render_svg,
    summarize_series,
    summary_path,
)
from tdmpc_srl.trainer import METRICS_HEADER


def write_metrics(path, eval_rows, episode_rows=()):
    lines = [METRICS_HEADER]
    for step, ret in episode_rows:
        lines.append(f"{step},{ret},0.1,0.2,0.3,0.4,1.0,0.5,,,0.000")
    for step, mean, std in eval_rows:
        lines.append(f"{step},,,,,,,,{mean},{std},0.000")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_read_metric_series_picks_nonempty_rows(tmp_path):
    p = write_metrics(tmp_path / "m.csv",
                      eval_rows=[(1000, -5.0, 1.0), (2000, -3.0, 0.5)],
                      episode_rows=[(200, -12.5), (400, -11.0)])
    steps, vals = read_metric_series(p, "eval_mean")
    assert np.array_equal(steps, [1000, 2000])
    assert np.array_equal(vals, [-5.0, -3.0])
    steps, vals = read_metric_series(p, "episode_return")
    assert np.array_equal(steps, [200, 400])
    assert np.array_equal(vals, [-12.5, -11.0])


def test_read_metric_series_errors(tmp_path):
    p = write_metrics(tmp_path / "m.csv", eval_rows=[(100, 1.0, 0.0)])
    with pytest.raises(PlotError, match="unknown metric"):
        read_metric_series(p, "banana")
    with pytest.raises(PlotError, match="no rows"):
        read_metric_series(write_metrics(tmp_path / "empty.csv", []), "eval_mean")
    bad = tmp_path / "bad.csv"
    bad.write_text("env_step,foo\n1,2\n", encoding="utf-8")
    with pytest.raises(PlotError, match="missing columns"):
        read_metric_series(bad, "eval_mean")


def test_align_identical_grids():
    s = [(np.array([1.0, 2.0]), np.array([5.0, 6.0])),
         (np.array([1.0, 2.0]), np.array([7.0, 8.0]))]
    grid, matrix, resampled = align_series(s)
    assert np.array_equal(grid, [1.0, 2.0])
    assert np.array_equal(matrix, [[5.0, 6.0], [7.0, 8.0]])
    assert not resampled


def test_align_resamples_to_coarsest(capsys):
    s = [(np.array([0.0, 10.0]), np.array([0.0, 10.0])),
         (np.array([0.0, 5.0, 10.0]), np.array([0.0, 1.0, 2.0]))]
    grid, matrix, resampled = align_series(s)
    assert resampled
    assert np.array_equal(grid, [0.0, 10.0])
    assert np.array_equal(matrix, [[0.0, 10.0], [0.0, 2.0]])
    assert "resampling" in capsys.readouterr().err


def test_summarize_series_band_algebra():
    mean, std = summarize_series(np.array([[1.0, 1.0], [3.0, 3.0]]))
    assert np.array_equal(mean, [2.0, 2.0])
    assert np.array_equal(std, [1.0, 1.0])  # constant runs 1 and 3: band +-1
    mean, std = summarize_series(np.array([[4.0, 5.0]]))
    assert np.array_equal(std, [0.0, 0.0])  # single run: zero-width band


def test_plot_runs_two_constant_runs(tmp_path):
    a = write_metrics(tmp_path / "a.csv", [(1000, 1.0, 0.0), (2000, 1.0, 0.0)])
    b = write_metrics(tmp_path / "b.csv", [(1000, 3.0, 0.0), (2000, 3.0, 0.0)])
    svg, summary = plot_runs([a, b], tmp_path / "curve.svg")
    text = svg.read_text()
    assert text.startswith("<svg")
    assert "<polyline" in text and "<polygon" in text
    assert "2 runs" in text
    lines = summary.read_text().splitlines()
    assert lines[0] == "env_step,eval_mean_mean,eval_mean_std"
    assert lines[1] == "1000,2.0,1.0"
    assert lines[2] == "2000,2.0,1.0"


def test_plot_single_run_zero_band(tmp_path):
    a = write_metrics(tmp_path / "a.csv", [(500, -2.0, 0.1), (1000, -1.0, 0.1)])
    svg, summary = plot_runs([a], tmp_path / "one.svg")
    rows = [line.split(",") for line in summary.read_text().splitlines()[1:]]
    assert all(r[2] == "0.0" for r in rows)
    assert "1 run (" in svg.read_text()


def test_plot_runs_matches_hand_means(tmp_path):
    rng = np.random.default_rng(21)
    steps = [1000, 2000, 3000]
    data = rng.normal(size=(5, 3))
    files = []
    for i in range(5):
        files.append(write_metrics(tmp_path / f"r{i}.csv",
                                   [(s, data[i, j], 0.0) for j, s in enumerate(steps)]))
    _, summary = plot_runs(files, tmp_path / "five.svg")
    rows = [line.split(",") for line in summary.read_text().splitlines()[1:]]
    for j, r in enumerate(rows):
        assert int(r[0]) == steps[j]
        assert float(r[1]) == pytest.approx(data[:, j].mean(), abs=1e-12)
        assert float(r[2]) == pytest.approx(data[:, j].std(), abs=1e-12)


def test_render_svg_is_self_contained():
    text = render_svg(np.array([0.0, 1.0]), np.array([1.0, 2.0]),
                      np.array([0.5, 0.5]), "eval_mean", 3)
    assert text.startswith("<svg xmlns=")
    assert text.rstrip().endswith("</svg>")
    assert "http" not in text.replace("http://www.w3.org/2000/svg", "")


def test_summary_path_suffix():
    assert summary_path("runs/out.svg").name == "out.summary.csv"


def test_plot_runs_rejects_empty():
    with pytest.raises(PlotError):
        plot_runs([], "out.svg")
