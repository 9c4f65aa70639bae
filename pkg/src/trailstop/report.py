"""Delimited output and companion figures for the command-line reports.

CSV files carry a header row, comma separators, newline line endings and
UTF-8 text; floats are written with 12 significant digits.  Each report
renders a PNG next to its CSV so the numbers can be eyeballed quickly.
"""

import csv
import math
import os


def fmt(value) -> str:
    """Render one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_lines(path: str, series, *, xlabel: str, ylabel: str, title: str,
                 markers=(), xlim=None) -> None:
    """Plot (xs, ys, label, style) series with optional vertical markers."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for xs, ys, label, style in series:
        ax.plot(xs, ys, style, label=label, linewidth=1.4)
    for value, label in markers:
        if math.isfinite(value):
            ax.axvline(value, color="0.4", linestyle=":", linewidth=1.0)
            ax.annotate(label, xy=(value, 0.02), xycoords=("data", "axes fraction"),
                        rotation=90, fontsize=8, color="0.3",
                        ha="right", va="bottom")
    if xlim is not None:
        ax.set_xlim(*xlim)
        lo, hi = xlim
        ys_all = [y for xs, ys, _, _ in series for x, y in zip(xs, ys) if lo <= x <= hi]
        if ys_all:
            pad = 0.08 * (max(ys_all) - min(ys_all) or 1.0)
            ax.set_ylim(min(ys_all) - pad, max(ys_all) + pad)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_zscores(path: str, labels, zs) -> None:
    """Bar chart of check z-scores with the +-3 acceptance band."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    pos = range(len(labels))
    colors = ["#336699" if abs(z) <= 3.0 else "#aa3333" for z in zs]
    ax.bar(pos, zs, color=colors)
    ax.axhline(3.0, color="0.4", linestyle=":")
    ax.axhline(-3.0, color="0.4", linestyle=":")
    ax.set_xticks(list(pos))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("z score")
    ax.set_title("analytic vs Monte Carlo", fontsize=10)
    ax.grid(True, axis="y", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def outdir_path(directory: str, name: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, name)
