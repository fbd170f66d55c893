"""Report artifacts: delimited tables and figures.

Writers are deterministic: JSON with sorted keys, CSV through the csv
module (RFC 4180 quoting), plot-data series as two-column TSV.  Figures
render through the Agg backend so batch runs need no display.
"""

from __future__ import annotations

import csv
import json

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_STYLE = {
    "figure.figsize": (5.0, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(list(row))
    return path


def write_tsv(path, pairs):
    """Two-column plot data, tab separated."""
    with open(path, "w", encoding="utf-8") as f:
        for a, b in pairs:
            f.write("%s\t%s\n" % (repr(float(a)), repr(float(b))))
    return path


def write_trend_tables(out_dir, reports, counts):
    """Per-trend CSV tables (k, N_k, measured, target, ratio) plus TSV
    series for plotting; returns the list of written paths."""
    paths = []
    for name in sorted(reports):
        rep = reports[name]
        rows = []
        for k, measured in rep.rows:
            ratio = measured / rep.target if rep.target != 0 else float("nan")
            rows.append([int(k), int(counts[k]), measured, rep.target, ratio])
        paths.append(
            write_csv(
                "%s/trend_%s.csv" % (out_dir, name),
                ["k", "N_k", "measured", "target", "ratio"],
                rows,
            )
        )
        paths.append(
            write_tsv(
                "%s/trend_%s.tsv" % (out_dir, name),
                [(k, m) for k, m in rep.rows],
            )
        )
    return paths


def polytope_figure(P, path, title=None):
    """Outline of the polytope with vertices marked."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        verts = np.array([[float(c) for c in v] for v in P.vertices])
        if P.n == 1:
            xs = np.sort(verts[:, 0])
            ax.plot(xs, np.zeros_like(xs), "-o", color="tab:blue")
            ax.set_ylim(-1, 1)
            ax.set_yticks([])
        else:
            closed = np.vstack([verts, verts[:1]])
            ax.plot(closed[:, 0], closed[:, 1], "-", color="tab:blue")
            ax.plot(verts[:, 0], verts[:, 1], "o", color="tab:blue", ms=4)
            ax.set_aspect("equal")
        ax.set_title(title or getattr(P, "label", "") or "polytope")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def residual_figure(residuals, path, title="iteration residual"):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(np.arange(len(residuals)), residuals, "-o", ms=3)
        ax.set_xlabel("step")
        ax.set_ylabel("gradient norm")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def trend_figure(reports, path):
    """One panel per asymptotic trend: measured values against k with the
    target level dashed."""
    names = sorted(reports)
    cols = 2
    rows = (len(names) + cols - 1) // cols
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(
            rows, cols, figsize=(4.0 * cols, 3.0 * rows), squeeze=False
        )
        for i, name in enumerate(names):
            rep = reports[name]
            ax = axes[i // cols][i % cols]
            ks = [k for k, _ in rep.rows]
            vals = [v for _, v in rep.rows]
            ax.plot(ks, vals, "-o", ms=4)
            ax.axhline(rep.target, ls="--", color="tab:red", lw=1)
            ax.set_title(name, fontsize=8)
            ax.set_xlabel("k")
        for j in range(len(names), rows * cols):
            axes[j // cols][j % cols].set_axis_off()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
