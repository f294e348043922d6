"""Headless figure rendering for the report paths of the CLI."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_ber_figure(points, path, title="Uncoded BER"):
    """Semilog BER-vs-Eb/N0 curves, one line per equalizer label."""
    by_label = {}
    for pt in points:
        by_label.setdefault(pt.equalizer, []).append((pt.eb_n0_db, pt.ber))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, pairs in by_label.items():
        pairs.sort()
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs], dtype=float)
        y[y <= 0] = np.nan  # zero-error cells have no place on a log axis
        ax.semilogy(x, y, marker="o", label=label)
    ax.set_xlabel(r"$E_b/N_0$ (dB)")
    ax.set_ylabel("Uncoded BER")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_complexity_figure(rows, path):
    """Log-log total-multiplication curves for the two processing paths.

    rows: sequence of dicts with block_length, t_total_time, t_total_freq.
    """
    rows = sorted(rows, key=lambda r: r["block_length"])
    nb = [r["block_length"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.loglog(nb, [r["t_total_time"] for r in rows], marker="o",
              label="time domain")
    ax.loglog(nb, [r["t_total_freq"] for r in rows], marker="s",
              label="frequency domain")
    ax.set_xlabel("block length")
    ax.set_ylabel("complex multiplications per coherence interval")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
