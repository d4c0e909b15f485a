"""Figures written next to the text outputs: training curves, energy traces, scaling fits, result bars."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {"figure.figsize": (6.0, 3.6), "figure.dpi": 110, "axes.grid": True, "grid.alpha": 0.3,
         "axes.spines.top": False, "axes.spines.right": False, "font.size": 9}


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def training_curves(history, path) -> str:
    """Loss per epoch on the left axis, validation HR@k (when recorded) on the right."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ep = [h["epoch"] for h in history]
        ax.plot(ep, [h["loss"] for h in history], color="C0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("link loss", color="C0")
        val = [(h["epoch"], h["val"]) for h in history if h.get("val") is not None]
        if val:
            ax2 = ax.twinx()
            ax2.plot(*zip(*val), color="C1", marker=".", label="valid HR@k")
            ax2.set_ylabel("valid HR@k", color="C1")
            ax2.set_ylim(0, 1)
            ax2.grid(False)
        return _save(fig, path)


def energy_trace(rows, path) -> str:
    """``rows`` are (layer, energy, Q, sigmoid(Q)) tuples from a diagnostics forward pass."""
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        a.plot(rows[:, 0], rows[:, 1], marker="o", ms=3)
        a.set_xlabel("layer t")
        a.set_ylabel("energy")
        b.plot(rows[:, 0], rows[:, 2], marker="o", ms=3, label="Q")
        b.set_xlabel("layer t")
        b.set_ylabel("Q")
        b2 = b.twinx()
        b2.plot(rows[:, 0], rows[:, 3], color="C3", ls="--", label="sigmoid(Q)")
        b2.set_ylim(0, 1)
        b2.set_ylabel("sigmoid(Q)", color="C3")
        b2.grid(False)
        return _save(fig, path)


def scaling_fit(rows, slope: float, r2: float, path) -> str:
    """Log-log encode time against edge count with the fitted line."""
    e = np.array([r[0] for r in rows], dtype=np.float64)
    t = np.array([r[1] for r in rows], dtype=np.float64)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(e, t, "o", label="measured")
        c = np.exp(np.mean(np.log(t) - slope * np.log(e)))
        ax.loglog(e, c * e ** slope, "-", label=f"slope {slope:.2f}, R² {r2:.3f}")
        ax.set_xlabel("|E|")
        ax.set_ylabel("encode seconds")
        ax.legend(frameon=False)
        return _save(fig, path)


def result_bars(results, path, metric: str | None = None) -> str:
    """Mean with std error bars for each result row (optionally one metric only)."""
    rs = [r for r in results if metric is None or r.metric == metric]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(rs))
        ax.bar(x, [100 * r.value for r in rs], yerr=[100 * r.std for r in rs], capsize=3, color="C0")
        ax.set_xticks(x, [f"{r.name}\n{r.metric}" for r in rs])
        ax.set_ylabel("score (%)")
        ax.set_ylim(0, 100)
        return _save(fig, path)
