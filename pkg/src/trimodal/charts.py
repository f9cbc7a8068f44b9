"""Deterministic SVG charts: class-colored scatter of 2-D projections and
grouped bars of per-subset scores across datasets. Identical inputs give
byte-identical files; no timestamps, no library styling."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

WIDTH, HEIGHT = 640, 480
MARGIN = 48


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _svg(body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def scatter_svg(points: np.ndarray, labels: Sequence[int],
                class_names: Sequence[str], title: str = "") -> str:
    """2-D points colored by class; the legend lists only classes that
    actually occur."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise DataError(f"expected nonempty [n, 2] points, got shape {pts.shape}")
    if len(labels) != pts.shape[0]:
        raise DataError(f"{len(labels)} labels for {pts.shape[0]} points")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.where(hi - lo < 1e-12, 1.0, hi - lo)

    def place(p):
        x = MARGIN + (p[0] - lo[0]) / span[0] * (WIDTH - 2 * MARGIN)
        y = HEIGHT - MARGIN - (p[1] - lo[1]) / span[1] * (HEIGHT - 2 * MARGIN)
        return x, y

    body = [
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="#cccccc"/>'
    ]
    for p, label in zip(pts, labels):
        x, y = place(p)
        color = PALETTE[int(label) % len(PALETTE)]
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.5" fill="{color}" '
                    f'fill-opacity="0.75"/>')
    present = sorted(set(int(l) for l in labels))
    for row, cls in enumerate(present):
        name = class_names[cls] if cls < len(class_names) else f"class {cls}"
        y = MARGIN + 14 + 18 * row
        body.append(f'<circle cx="{WIDTH - MARGIN - 86}" cy="{y - 4}" r="4" '
                    f'fill="{PALETTE[cls % len(PALETTE)]}"/>')
        body.append(f'<text x="{WIDTH - MARGIN - 76}" y="{y}" font-family="sans-serif" '
                    f'font-size="12">{name}</text>')
    return _svg(body, title)


def bars_svg(scores: dict[str, dict[str, float]], title: str = "",
             value_label: str = "macro F") -> str:
    """Grouped bars: one group per modality subset (sorted), one bar per
    dataset (sorted) inside each group."""
    if not scores or not any(scores.values()):
        raise DataError("empty score table")
    subsets = sorted({s for per_ds in scores.values() for s in per_ds})
    datasets = sorted(scores)
    n_groups, n_bars = len(subsets), len(datasets)
    plot_w = WIDTH - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN
    group_w = plot_w / n_groups
    bar_w = min(34.0, group_w / (n_bars + 1))

    body = [
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="#333333"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="#333333"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = HEIGHT - MARGIN - tick * plot_h
        body.append(f'<line x1="{MARGIN - 4}" y1="{_fmt(y)}" x2="{MARGIN}" '
                    f'y2="{_fmt(y)}" stroke="#333333"/>')
        body.append(f'<text x="{MARGIN - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="10">{tick}</text>')
    for gi, subset in enumerate(subsets):
        cx = MARGIN + (gi + 0.5) * group_w
        body.append(f'<text x="{_fmt(cx)}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11">{subset}</text>')
        for bi, ds in enumerate(datasets):
            value = scores.get(ds, {}).get(subset)
            if value is None:
                continue
            h = max(0.0, min(1.0, float(value))) * plot_h
            x = cx + (bi - n_bars / 2) * bar_w
            body.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(HEIGHT - MARGIN - h)}" '
                f'width="{_fmt(bar_w - 2)}" height="{_fmt(h)}" '
                f'fill="{PALETTE[bi % len(PALETTE)]}"/>'
            )
    for bi, ds in enumerate(datasets):
        y = MARGIN + 14 + 18 * bi
        body.append(f'<rect x="{WIDTH - MARGIN - 94}" y="{y - 10}" width="10" height="10" '
                    f'fill="{PALETTE[bi % len(PALETTE)]}"/>')
        body.append(f'<text x="{WIDTH - MARGIN - 80}" y="{y}" font-family="sans-serif" '
                    f'font-size="12">{ds}</text>')
    body.append(f'<text x="14" y="{HEIGHT / 2:.0f}" font-family="sans-serif" font-size="11" '
                f'transform="rotate(-90 14 {HEIGHT / 2:.0f})">{value_label}</text>')
    return _svg(body, title)


def emit_chart(content: str, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(content)
    except OSError as e:
        raise ConfigError(f"cannot write chart to {path}: {e}") from e
