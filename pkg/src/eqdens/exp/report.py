"""Tabular and SVG output for experiment results.

CSV schema: first line holds the column names, every following line one row.
Integers print as plain decimals, floats with 17 significant digits so a
parse of the file reproduces the exact values. SVG plots are self-contained
(no scripts, no external references): one polyline per series, tick labels
on both axes, and a legend naming every series.
"""

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

__all__ = [
    "ReportError",
    "Table",
    "emit_csv",
    "emit_svg_plot",
    "format_number",
    "record_series_table",
    "record_summary_table",
]


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class Table:
    """Column names plus numeric rows, the unit every CSV file is built from."""

    columns: tuple
    rows: tuple

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        if not cols:
            raise ReportError("table needs at least one column")
        rows = tuple(tuple(r) for r in self.rows)
        for r in rows:
            if len(r) != len(cols):
                raise ReportError(
                    f"row of width {len(r)} in a {len(cols)}-column table"
                )
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        raise ReportError("boolean cell in a numeric table")
    if isinstance(value, (int, np.integer)):
        return "%d" % int(value)
    v = float(value)
    if not math.isfinite(v):
        raise ReportError(f"non-finite cell value {value!r}")
    return "%.17g" % v


def record_series_table(record) -> Table:
    """Per-epoch series of a run: loss plus each layer's per-l feature norms."""
    columns = ["epoch", "loss"]
    n_layers = len(record.norms[0]) if record.norms else 0
    for layer in range(n_layers):
        for l in record.norm_ls:
            columns.append(f"norm_layer{layer}_l{l}")
    rows = []
    for epoch, loss in enumerate(record.losses):
        row = [epoch, loss]
        for layer in range(n_layers):
            row.extend(record.norms[epoch][layer])
        rows.append(tuple(row))
    return Table(tuple(columns), tuple(rows))


def record_summary_table(record) -> Table:
    """One-row summary of a finished run: size and final density errors."""
    columns = ["param_count", "eps_total"]
    row = [record.param_count, record.eps_total]
    for l, value in record.eps_l:
        columns.append(f"eps_{l}")
        row.append(value)
    return Table(tuple(columns), (tuple(row),))


def emit_csv(table_or_record, path) -> None:
    """Write a Table (or a run record's per-epoch series) as CSV."""
    table = table_or_record
    if not isinstance(table, Table):
        table = record_series_table(table)
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(format_number(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

_WIDTH, _HEIGHT = 640, 400
_LEFT, _RIGHT, _TOP, _BOTTOM = 72, 24, 44, 52


def _ticks(lo: float, hi: float, n: int = 5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def emit_svg_plot(series, path, *, title="", xlabel="", ylabel="", x=None, log_y=False) -> None:
    """Line plot of one or more named series.

    ``series`` maps a legend label to a sequence of y values; ``x`` optionally
    supplies shared x coordinates (default: the index). With ``log_y`` the
    y axis is log10-scaled, which requires strictly positive values.
    """
    if not series:
        raise ReportError("nothing to plot: series mapping is empty")
    prepared = []
    for label, ys in series.items():
        ys = [float(v) for v in ys]
        if not ys:
            raise ReportError(f"series {label!r} is empty")
        xs = list(range(len(ys))) if x is None else [float(v) for v in x]
        if len(xs) != len(ys):
            raise ReportError(f"series {label!r} length does not match x")
        if not all(math.isfinite(v) for v in xs + ys):
            raise ReportError(f"series {label!r} has non-finite values")
        if log_y:
            if min(ys) <= 0.0:
                raise ReportError(f"series {label!r} has values <= 0 on a log axis")
            ys = [math.log10(v) for v in ys]
        prepared.append((str(label), xs, ys))

    x_lo = min(min(xs) for _, xs, _ in prepared)
    x_hi = max(max(xs) for _, xs, _ in prepared)
    y_lo = min(min(ys) for _, _, ys in prepared)
    y_hi = max(max(ys) for _, _, ys in prepared)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM

    def px(v):
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v):
        return _TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{escape(title)}</text>'
        )
    for tv in _ticks(x_lo, x_hi):
        xp = px(tv)
        parts.append(
            f'<line x1="{xp:.2f}" y1="{_TOP}" x2="{xp:.2f}" '
            f'y2="{_TOP + plot_h}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{xp:.2f}" y="{_TOP + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tv:.4g}</text>'
        )
    for tv in _ticks(y_lo, y_hi):
        yp = py(tv)
        label = 10.0**tv if log_y else tv
        parts.append(
            f'<line x1="{_LEFT}" y1="{yp:.2f}" x2="{_LEFT + plot_w}" '
            f'y2="{yp:.2f}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{_LEFT - 6}" y="{yp + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label:.3g}</text>'
        )
    parts.append(
        f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>'
    )
    if xlabel:
        parts.append(
            f'<text x="{_LEFT + plot_w / 2:.1f}" y="{_HEIGHT - 12}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">'
            f"{escape(xlabel)}</text>"
        )
    if ylabel:
        yv = _TOP + plot_h / 2
        parts.append(
            f'<text x="18" y="{yv:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 18 {yv:.1f})">{escape(ylabel)}</text>'
        )
    for i, (label, xs, ys) in enumerate(prepared):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(xv):.2f},{py(yv):.2f}" for xv, yv in zip(xs, ys))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.6" '
            f'points="{pts}"/>'
        )
    legend_x = _LEFT + plot_w - 150
    for i, (label, _, _) in enumerate(prepared):
        color = _PALETTE[i % len(_PALETTE)]
        ly = _TOP + 14 + 17 * i
        parts.append(
            f'<line x1="{legend_x}" y1="{ly - 4}" x2="{legend_x + 22}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 28}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{escape(label)}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
