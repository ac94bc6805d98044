"""CSV tables and figures written by the CLI's ``--report-dir`` option."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .game import ERR, P, R, V  # noqa: E402

_CLASS_NAMES = {R: "refuter", V: "verifier", P: "probabilistic", ERR: "error"}


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_summary(outdir: Path, report: dict) -> Path:
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list):
            rows.append((prefix, ";".join(str(x) for x in obj)))
        else:
            rows.append((prefix, obj))

    walk("", report)
    return write_csv(Path(outdir) / "summary.csv", ["field", "value"], rows)


def u_level_rows(g, u) -> list:
    return [(i, g.cls[i], u.level(i), g.describe(i)) for i in u]


def plot_u_levels(g, u, path: Path) -> Path:
    """Stacked bar chart of U-set members per level and vertex class."""
    levels = sorted({u.level(i) for i in u})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bottom = [0] * len(levels)
    pos = {lv: k for k, lv in enumerate(levels)}
    for cls in (ERR, R, V, P):
        heights = [0] * len(levels)
        for i in u:
            if g.cls[i] == cls:
                heights[pos[u.level(i)]] += 1
        if any(heights):
            ax.bar(levels, heights, bottom=bottom, label=_CLASS_NAMES[cls])
            bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_xlabel("level")
    ax.set_ylabel("vertices entering")
    ax.set_title("U-set growth")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_convergence(deltas, path: Path, epsilon: float | None = None) -> Path:
    """Semi-log plot of the per-iteration change of value iteration."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = [k + 1 for k, d in enumerate(deltas) if d > 0]
    ys = [d for d in deltas if d > 0]
    if ys:
        ax.semilogy(xs, ys, lw=1)
    if epsilon:
        ax.axhline(epsilon, color="gray", ls="--", lw=0.8, label="epsilon")
        ax.legend(fontsize=8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("max change")
    ax.set_title("value iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_check_report(outdir, g, u, report: dict) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        write_summary(outdir, report),
        write_csv(outdir / "u_levels.csv", ["vertex", "class", "level", "description"], u_level_rows(g, u)),
        plot_u_levels(g, u, outdir / "u_levels.png"),
    ]


def write_value_report(outdir, g, result, report: dict, epsilon: float) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    values = [(i, g.cls[i], repr(float(result.values[i])), g.describe(i)) for i in range(len(g))]
    deltas = [(k + 1, repr(d)) for k, d in enumerate(result.deltas)]
    return [
        write_summary(outdir, report),
        write_csv(outdir / "values.csv", ["vertex", "class", "value", "description"], values),
        write_csv(outdir / "convergence.csv", ["iteration", "max_change"], deltas),
        plot_convergence(result.deltas, outdir / "convergence.png", epsilon),
    ]
