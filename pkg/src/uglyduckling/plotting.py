"""Error curves of an experiment, rendered to a static file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CURVES = (
    ("mean_err_mu_hat", r"$\|\hat\mu_h - \mu\|_1$"),
    ("mean_err_mu_star", r"$\|\hat\mu^*_h - \mu\|_1$"),
    ("mean_err_f_norm", r"normalized $\|\hat f_h - f\|_1$"),
    ("mean_err_nu", r"$\|\hat\nu_h - \nu\|_1$"),
    ("mean_err_spine", "spine error"),
)


def plot_errors(rows: list[dict], path) -> Path:
    """Mean error against the horizon ``h``, one line per estimate.

    The SVG is reproducible byte for byte: no date stamp and fixed element ids.
    """
    path = Path(path)
    hs = [row["h"] for row in rows]
    with plt.rc_context({"svg.hashsalt": "uglyduckling", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for key, label in CURVES:
            ax.plot(hs, [row[key] for row in rows], marker="o", ms=3, label=label)
        ax.set_xlabel("h")
        ax.set_ylabel("average error")
        ax.set_ylim(bottom=0)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
    return path
