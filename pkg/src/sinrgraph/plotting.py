"""Figures written next to the study CSVs. The CSVs stay the contract; plots are a convenience."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import StudyResult  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_degree(res: StudyResult, out: Path) -> list[Path]:
    by = {e.name: e for e in res.estimates}
    ks = sorted({int(n.rsplit("_", 1)[1]) for n in by if n.startswith("h_out_")})
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for tag, marker in (("out", "o"), ("in", "s")):
        vals = [by[f"h_{tag}_{k}"].value for k in ks]
        errs = [3 * by[f"h_{tag}_{k}"].se for k in ks]
        ax.errorbar(ks, vals, yerr=errs, marker=marker, capsize=3, label=f"h {tag}")
    ax.set_xlabel("path length k")
    ax.set_ylabel("mean number of paths")
    ax.legend()
    return [_save(fig, Path(out) / "degree.png")]


def plot_exit_tail(res: StudyResult, out: Path) -> list[Path]:
    t = res.table
    q = np.array(t["q"], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for stat, label in (("value", "exit delay"), ("trials", "trials"), ("snr_trials", "SNR trials")):
        s = np.array([t["survival"][stat, x] for x in t["q"]])
        ok = s > 0
        ax.loglog(q[ok], s[ok], marker="o", label=label)
    curve = t["oracle"]
    ax.loglog(q, curve.exact, "k--", label="SNR trials, quadrature")
    ax.loglog(q, 1 / q, ":", color="grey", label="1/q")
    ax.set_xlabel("q")
    ax.set_ylabel("P(X > q)")
    ax.legend(fontsize=8)
    return [_save(fig, Path(out) / "exit_tail.png")]


def plot_local_delay(res: StudyResult, out: Path) -> list[Path]:
    x = np.asarray(res.table["samples"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    srt = np.sort(x)
    surv = 1 - np.arange(1, len(srt) + 1) / len(srt)
    ax.loglog(srt[:-1], surv[:-1])
    ax.axvline(res.checks[0].reference, color="k", ls="--", label="quadrature mean")
    ax.axvline(res.checks[0].estimate, color="C1", ls=":", label="sample mean")
    ax.set_xlabel("local delay")
    ax.set_ylabel("empirical survival")
    ax.legend(fontsize=8)
    paths = [_save(fig, Path(out) / "local_delay.png")]
    geo = res.table.get("geometric")
    if geo:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        k = np.arange(1, int(geo["samples"].max()) + 1)
        freq = np.bincount(geo["samples"].astype(int), minlength=len(k) + 1)[1:] / geo["n"]
        ax.semilogy(k, freq, ".", label="fixed pattern")
        ax.semilogy(k, geo["pi"] * (1 - geo["pi"]) ** (k - 1), "k-", label="geometric law")
        ax.set_xlabel("local delay")
        ax.set_ylabel("frequency")
        ax.legend(fontsize=8)
        paths.append(_save(fig, Path(out) / "local_delay_geometric.png"))
    return paths


def plot_time_constant(res: StudyResult, out: Path) -> list[Path]:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for tab in res.table:
        ax.errorbar(tab.ladder, tab.ratio, yerr=3 * np.asarray(tab.se), marker="o", capsize=3,
                    label=f"{tab.model}, d=({tab.direction[0]:g},{tab.direction[1]:g})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("distance t")
    ax.set_ylabel("mean delay / t")
    ax.legend(fontsize=8)
    return [_save(fig, Path(out) / "time_constant.png")]


PLOTTERS = {
    "degree": plot_degree,
    "exit_tail": plot_exit_tail,
    "local_delay": plot_local_delay,
    "time_constant": plot_time_constant,
}


def plot_study(res: StudyResult, out) -> list[Path]:
    fn = PLOTTERS.get(res.study)
    return fn(res, Path(out)) if fn else []
