"""CSV writers and SVG figures for experiment reports.

Figures use the Agg backend with a fixed hash salt and no date stamp so
that repeated runs produce identical files.
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_HEADER = "# kac-relax v1"

STYLE = {
    "svg.hashsalt": "kac-relax",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "figure.figsize": (5.0, 3.2),
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def fmt(x):
    """17 significant digits for reals, plain text otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if hasattr(x, "item"):  # numpy scalar
        return fmt(x.item())
    return str(x)


def write_csv(path, columns, rows, meta=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={fmt(val)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def line_plot(path, x, series, xlabel, ylabel, logy=False, title=None, styles=None):
    """One line per entry of ``series`` (label -> y values)."""
    styles = styles or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, styles.get(label, "-"), label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
