"""Matplotlib figures for experiment reports and single chains."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_report_figures", "plot_chain_trace"]

_META = {"Software": None}


def _series(report, key):
    ns = sorted(int(k) for k in report.aggregates)
    get = lambda suffix: np.array([report.aggregates[str(n)][f"{key}_{suffix}"] for n in ns], dtype=float)  # noqa: E731
    return np.array(ns), get("median"), get("q1"), get("q3")


def _curve(ax, ns, med, q1, q3, label):
    ax.plot(ns, med, "o-", color="C0", label=label)
    ax.fill_between(ns, q1, q3, color="C0", alpha=0.25, lw=0, label="interquartile range")


def render_report_figures(report, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []

    ns, med, q1, q3 = _series(report, "posterior_mean_l1_error")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if np.any(np.isfinite(med)):
        _curve(ax, ns, med, q1, q3, "median over replications")
        ds = np.array([report.aggregates[str(n)]["d"] for n in ns], dtype=float)
        ref = np.sqrt(np.log(ds) / ns)
        if math.isfinite(med[0]) and ref[0] > 0:
            ax.plot(ns, ref * med[0] / ref[0], "--", color="gray", label=r"$\propto\sqrt{\log d / n}$")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$\|\bar\beta - \beta^*\|_1$")
    ax.set_title("posterior-mean l1 error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "curve_l1_vs_n.png"
    fig.savefig(p, dpi=120, metadata=_META)
    plt.close(fig)
    paths.append(p)

    ns, med, q1, q3 = _series(report, "mean_size")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if np.any(np.isfinite(med)):
        _curve(ax, ns, med, q1, q3, "median posterior mean size")
    ax.axhline(report.config.s_star, color="k", ls=":", label="s*")
    ax.set_xlabel("n")
    ax.set_ylabel("posterior mean |supp|")
    ax.set_title("model size")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "curve_dim_vs_n.png"
    fig.savefig(p, dpi=120, metadata=_META)
    plt.close(fig)
    paths.append(p)

    checks = [c for c in ("T1", "T2", "C1", "T3") if c in report.config.checks]
    ns = sorted(int(k) for k in report.aggregates)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    width = 0.8 / max(len(checks), 1)
    x = np.arange(len(ns))
    for i, c in enumerate(checks):
        freq = [report.aggregates[str(n)][f"freq_{c}"] for n in ns]
        ax.bar(x + i * width, np.nan_to_num(freq), width, label=c)
    ax.set_xticks(x + width * (len(checks) - 1) / 2)
    ax.set_xticklabels([str(n) for n in ns])
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("n")
    ax.set_ylabel("fraction of replications passing")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "indicator_frequencies.png"
    fig.savefig(p, dpi=120, metadata=_META)
    plt.close(fig)
    paths.append(p)
    return paths


def plot_chain_trace(chain, beta_star, path) -> Path:
    """Model size and l1 error along a chain."""
    B = chain.dense()
    err = np.sum(np.abs(B - beta_star.to_dense()), axis=1)
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
    a1.plot(chain.sizes, lw=0.6)
    a1.axhline(beta_star.s, color="k", ls=":")
    a1.set_ylabel("|supp|")
    a2.plot(err, lw=0.6, color="C1")
    a2.set_ylabel(r"$\|\beta - \beta^*\|_1$")
    a2.set_xlabel("stored iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)
