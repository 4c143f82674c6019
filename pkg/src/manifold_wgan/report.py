"""Training-curve report: delimited data plus a matplotlib line chart."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .gan.trainer import TrainingLog
from .imaging import atomic_write_bytes


@dataclass
class CurveSummary:
    first_w1: float | None
    final_w1: float | None
    spearman: float | None
    evaluations: int

    @property
    def ratio(self) -> float | None:
        if self.first_w1 in (None, 0.0) or self.final_w1 is None:
            return None
        return self.final_w1 / self.first_w1


def summarize(log: TrainingLog) -> CurveSummary:
    it, w = log.evaluations()
    if len(w) == 0:
        return CurveSummary(None, None, None, 0)
    rho = float(spearmanr(it, w).correlation) if len(w) >= 2 else None
    return CurveSummary(float(w[0]), float(w[-1]), rho, len(w))


def curves_csv(log: TrainingLog) -> str:
    """``iter, neg_critic_cost, w1_eval`` with blanks where a value was not logged."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "neg_critic_cost", "w1_eval"])
    for r in log.rows:
        neg = "" if r["critic_loss"] is None else repr(-float(r["critic_loss"]))
        w = "" if r["w1_eval"] is None else repr(float(r["w1_eval"]))
        writer.writerow([r["iter"], neg, w])
    return buf.getvalue()


def curves_figure(log: TrainingLog):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in log.rows if r["critic_loss"] is not None]
    it = np.array([r["iter"] for r in rows])
    neg = np.array([-r["critic_loss"] for r in rows])
    ev_it, ev_w = log.evaluations()

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
    ax1.plot(it, neg, lw=0.6, color="#1b1f8a")
    ax1.set_ylabel("negative critic cost")
    ax2.plot(ev_it, ev_w, marker="o", ms=3, lw=1.0, color="#941b22")
    ax2.set_ylabel("held-out W1")
    ax2.set_xlabel("generator iteration")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def write_report(log: TrainingLog, out_dir, formats=("svg",)) -> list[Path]:
    """Write ``curves.csv`` and ``curves.<fmt>`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "curves.csv"]
    atomic_write_bytes(paths[0], curves_csv(log).encode())
    fig = curves_figure(log)
    try:
        for fmt in formats:
            buf = io.BytesIO()
            # fixed hash salt and no date keep SVG output byte-stable across runs
            meta = {"Date": None} if fmt in ("svg", "pdf") else {}
            if fmt == "svg":
                import matplotlib

                matplotlib.rcParams["svg.hashsalt"] = "manifold-wgan"
            fig.savefig(buf, format=fmt, metadata=meta)
            path = out / f"curves.{fmt}"
            atomic_write_bytes(path, buf.getvalue())
            paths.append(path)
    finally:
        import matplotlib.pyplot as plt

        plt.close(fig)
    return paths
