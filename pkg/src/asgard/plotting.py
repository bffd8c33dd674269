"""Residual curves with min/max bands, rendered off-screen."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_report"]

# residuals at or below this are drawn at the floor of the log axis
FLOOR = 1e-16


def plot_report(report, path_stem, title=None, formats=("svg", "png")):
    """Plot each configuration's mean residual and its band, one file per format.

    Returns the list of written paths.
    """
    # fixed hash salt keeps svg element ids stable across runs
    plt.rcParams["svg.hashsalt"] = "asgard"
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    k = np.asarray(report.k)
    mask = k >= 1
    for c in report.configs:
        mean = np.maximum(report.mean[c][mask], FLOOR)
        lo = np.maximum(report.lo[c][mask], FLOOR)
        hi = np.maximum(report.hi[c][mask], FLOOR)
        (line,) = ax.plot(k[mask], mean, lw=1.4, label=c)
        ax.fill_between(k[mask], lo, hi, color=line.get_color(), alpha=0.18, lw=0)
    ax.set_yscale("log")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("relative primal objective residual")
    if title:
        ax.set_title(title)
    ax.grid(True, which="major", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    paths = []
    for fmt in formats:
        p = "%s.%s" % (path_stem, fmt)
        # fixed metadata keeps reruns byte-identical
        meta = {"Date": None} if fmt == "svg" else {}
        fig.savefig(p, format=fmt, dpi=120, metadata=meta)
        paths.append(p)
    plt.close(fig)
    return paths
