"""Hand-rolled SVG renderer for run logs: line plots, stacked areas, bands.

The data-to-pixel mapping is fixed and documented so plots are testable:

    px(x) = ML + (x - xmin) / (xmax - xmin) * (W - ML - MR)
    py(y) = H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB)

with W = 900, H = 500, margins ML = 60, MR = 20, MT = 30, MB = 45, and all
coordinates written with two decimal places.  Degenerate ranges (no data or
xmin == xmax) fall back to the unit interval.
"""

from __future__ import annotations

import os

import numpy as np

WIDTH, HEIGHT = 900, 500
ML, MR, MT, MB = 60, 20, 30, 45


class PlotError(ValueError):
    pass


def _bounds(values):
    vals = [v for arr in values for v in np.asarray(arr, dtype=float).ravel()
            if np.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if lo == hi:
        return lo - 0.5, hi + 0.5
    return lo, hi


def px(x, xmin, xmax):
    return ML + (x - xmin) / (xmax - xmin) * (WIDTH - ML - MR)


def py(y, ymin, ymax):
    return HEIGHT - MB - (y - ymin) / (ymax - ymin) * (HEIGHT - MT - MB)


def color(i: int) -> str:
    return f"hsl({(i * 137.508) % 360.0:.1f},65%,45%)"


def _poly_points(xs, ys, xmin, xmax, ymin, ymax) -> str:
    return " ".join(f"{px(x, xmin, xmax):.2f},{py(y, ymin, ymax):.2f}"
                    for x, y in zip(xs, ys))


def _axes(parts, xmin, xmax, ymin, ymax, title, xlabel, ylabel):
    parts.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    x0, x1 = px(xmin, xmin, xmax), px(xmax, xmin, xmax)
    y0, y1 = py(ymin, ymin, ymax), py(ymax, ymin, ymax)
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" '
                 'stroke="black" stroke-width="1"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = xmin + frac * (xmax - xmin)
        yv = ymin + frac * (ymax - ymin)
        xp, yp = px(xv, xmin, xmax), py(yv, ymin, ymax)
        parts.append(f'<line x1="{xp:.2f}" y1="{y0:.2f}" x2="{xp:.2f}" y2="{y0 + 4:.2f}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{xp:.2f}" y="{y0 + 16:.2f}" font-size="10" '
                     f'text-anchor="middle">{xv:g}</text>')
        parts.append(f'<line x1="{x0 - 4:.2f}" y1="{yp:.2f}" x2="{x0:.2f}" y2="{yp:.2f}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{x0 - 6:.2f}" y="{yp + 3:.2f}" font-size="10" '
                     f'text-anchor="end">{yv:.4g}</text>')
    parts.append(f'<text x="{WIDTH / 2:.2f}" y="18" font-size="13" '
                 f'text-anchor="middle">{title}</text>')
    parts.append(f'<text x="{WIDTH / 2:.2f}" y="{HEIGHT - 8}" font-size="11" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="14" y="{HEIGHT / 2:.2f}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 14 {HEIGHT / 2:.2f})">{ylabel}</text>')


def _legend(parts, labels):
    for i, label in enumerate(labels):
        yp = MT + 8 + 13 * i
        parts.append(f'<rect x="{WIDTH - MR - 120}" y="{yp - 8}" width="10" height="10" '
                     f'fill="{color(i)}"/>')
        parts.append(f'<text x="{WIDTH - MR - 106}" y="{yp + 1}" '
                     f'font-size="10">{label}</text>')


def _close(parts) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    return head + "".join(parts) + "</svg>"


def line_plot(series, title="", xlabel="", ylabel="", legend=True) -> str:
    """series: iterable of (xs, ys, label).  Empty series draw empty axes."""
    series = [(np.asarray(x, float), np.asarray(y, float), lab) for x, y, lab in series]
    xmin, xmax = _bounds([s[0] for s in series])
    ymin, ymax = _bounds([s[1] for s in series])
    parts: list[str] = []
    _axes(parts, xmin, xmax, ymin, ymax, title, xlabel, ylabel)
    for i, (xs, ys, _) in enumerate(series):
        if xs.size == 0:
            continue
        parts.append(f'<polyline fill="none" stroke="{color(i)}" stroke-width="1.5" '
                     f'points="{_poly_points(xs, ys, xmin, xmax, ymin, ymax)}"/>')
    if legend and series:
        _legend(parts, [s[2] for s in series])
    return _close(parts)


def stack_plot(xs, fractions, labels, title="", xlabel="", ylabel="share") -> str:
    """Stacked area chart of rows summing to ~1 (per-task policy over time)."""
    xs = np.asarray(xs, float)
    fr = np.asarray(fractions, float)
    if fr.ndim != 2 or (xs.size and fr.shape[0] != xs.size):
        raise PlotError(f"fractions shape {fr.shape} does not match x length {xs.size}")
    xmin, xmax = _bounds([xs])
    parts: list[str] = []
    _axes(parts, xmin, xmax, 0.0, 1.0, title, xlabel, ylabel)
    if xs.size:
        cum = np.concatenate([np.zeros((fr.shape[0], 1)), np.cumsum(fr, axis=1)], axis=1)
        for i in range(fr.shape[1]):
            top = _poly_points(xs, cum[:, i + 1], xmin, xmax, 0.0, 1.0)
            bottom = _poly_points(xs[::-1], cum[::-1, i], xmin, xmax, 0.0, 1.0)
            parts.append(f'<polygon fill="{color(i)}" fill-opacity="0.85" stroke="none" '
                         f'points="{top} {bottom}"/>')
    if len(labels) <= 16:
        _legend(parts, labels)
    return _close(parts)


def band_plot(series, title="", xlabel="", ylabel="") -> str:
    """series: iterable of (xs, mean, std, label); draws mean lines with +-std bands."""
    series = [(np.asarray(x, float), np.asarray(m, float), np.asarray(s, float), lab)
              for x, m, s, lab in series]
    xmin, xmax = _bounds([s[0] for s in series])
    ymin, ymax = _bounds([np.concatenate([m - s, m + s]) if m.size else m
                          for _, m, s, _ in series])
    parts: list[str] = []
    _axes(parts, xmin, xmax, ymin, ymax, title, xlabel, ylabel)
    for i, (xs, mean, std, _) in enumerate(series):
        if xs.size == 0:
            continue
        top = _poly_points(xs, mean + std, xmin, xmax, ymin, ymax)
        bottom = _poly_points(xs[::-1], (mean - std)[::-1], xmin, xmax, ymin, ymax)
        parts.append(f'<polygon fill="{color(i)}" fill-opacity="0.25" stroke="none" '
                     f'points="{top} {bottom}"/>')
        parts.append(f'<polyline fill="none" stroke="{color(i)}" stroke-width="1.5" '
                     f'points="{_poly_points(xs, mean, xmin, xmax, ymin, ymax)}"/>')
    _legend(parts, [s[3] for s in series])
    return _close(parts)


def read_csv_columns(path: str) -> dict:
    """Parse a run log into {column: float array}; malformed rows name their line."""
    with open(path) as f:
        header = f.readline().strip()
        if not header:
            return {}
        names = header.split(",")
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(names):
                raise PlotError(f"{path}:{lineno}: expected {len(names)} cells, "
                                f"got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as e:
                raise PlotError(f"{path}:{lineno}: {e}") from None
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def _downsample(n: int, limit: int = 2000) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).astype(int))


def render_run_plots(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Render the standard figures for one finished (or in-progress) run."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []

    train = read_csv_columns(os.path.join(run_dir, "train_log.csv"))
    pi_names = sorted((n for n in train if n.startswith("pi_")),
                      key=lambda s: int(s.split("_")[1]))
    xs = train.get("cum_input_steps", np.empty(0))
    keep = _downsample(xs.size)
    fractions = (np.stack([train[n][keep] for n in pi_names], axis=1)
                 if pi_names and xs.size else np.empty((0, 0)))
    svg = stack_plot(xs[keep] if xs.size else xs, fractions,
                     [n.replace("pi_", "task ") for n in pi_names],
                     title="policy over time", xlabel="input steps")
    path = os.path.join(out_dir, "policy_stack.svg")
    with open(path, "w") as f:
        f.write(svg)
    written.append(path)

    ev = read_csv_columns(os.path.join(run_dir, "eval_log.csv"))
    exs = ev.get("cum_input_steps", np.empty(0))
    po_names = sorted((n for n in ev if n.startswith("po_")),
                      key=lambda s: int(s.split("_")[1]))
    series = [(exs, ev[n], n) for n in po_names]
    path = os.path.join(out_dir, "task_losses.svg")
    with open(path, "w") as f:
        f.write(line_plot(series, title="per-task loss (per output)",
                          xlabel="input steps", ylabel="nats",
                          legend=len(po_names) <= 16))
    written.append(path)

    path = os.path.join(out_dir, "entropy.svg")
    ent = [(xs[keep] if xs.size else xs,
            train["policy_entropy"][keep] if xs.size else np.empty(0), "entropy")]
    with open(path, "w") as f:
        f.write(line_plot(ent, title="policy entropy", xlabel="input steps",
                          ylabel="nats"))
    written.append(path)

    comp = ev.get("complexity", np.empty(0))
    if comp.size and np.any(comp != 0.0):
        path = os.path.join(out_dir, "complexity.svg")
        with open(path, "w") as f:
            f.write(line_plot([(exs, comp, "KL")], title="network complexity",
                              xlabel="input steps", ylabel="nats"))
        written.append(path)
    return written


def render_band_plots(run_dirs, metric: str = "l_tt_per_output",
                      out_path: str = "bands.svg", title: str | None = None) -> str:
    """Mean +- std of an eval metric across runs, resampled onto the first
    run's step grid when grids differ."""
    curves = []
    for d in run_dirs:
        ev = read_csv_columns(os.path.join(d, "eval_log.csv"))
        if metric not in ev:
            raise PlotError(f"{d}: eval log has no column {metric!r}")
        curves.append((ev["cum_input_steps"], ev[metric]))
    if not curves:
        raise PlotError("no runs given")
    grid = curves[0][0]
    ys = np.stack([y if y.shape == grid.shape and np.array_equal(x, grid)
                   else np.interp(grid, x, y) for x, y in curves])
    svg = band_plot([(grid, ys.mean(axis=0), ys.std(axis=0), metric)],
                    title=title or f"{metric} across {len(run_dirs)} runs",
                    xlabel="input steps", ylabel=metric)
    with open(out_path, "w") as f:
        f.write(svg)
    return out_path
