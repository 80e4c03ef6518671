import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from alphaforge.attribution import grid_matrix  # noqa: E402

logger = logging.getLogger(__name__)

# no timestamps or version strings in the PNG metadata
PNG_METADATA = {"Software": None}


class DisplayManager:
    """
    Renders the pipeline's figure outputs to PNG files
    One method per figure; every method returns the written path
    """

    def __init__(self, out_dir):
        self.figures_dir = Path(out_dir) / "figures"

    def _save(self, fig, name):
        self.figures_dir.mkdir(parents=True, exist_ok=True)
        path = self.figures_dir / name
        fig.tight_layout()
        fig.savefig(path, dpi=100, metadata=PNG_METADATA)
        plt.close(fig)
        logger.info("Wrote figure %s", path)
        return path

    def plot_cumulative_returns(self, backtest, title="Cumulative returns"):
        fig, ax = plt.subplots(figsize=(10, 5))
        dates = backtest.dates.astype("datetime64[D]").astype(object)
        for leg, color in (("top", "tab:green"), ("bottom", "tab:red"), ("long_short", "tab:blue")):
            ax.plot(dates, backtest.cumulative(leg), label=f"{leg} (k={backtest.k})", color=color)
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_title(title)
        ax.set_ylabel("cumulative return")
        ax.grid(True, alpha=0.3)
        ax.legend()
        return self._save(fig, "cumulative_returns.png")

    def plot_ic_histogram(self, ic_frame):
        fig, ax = plt.subplots(figsize=(7, 5))
        ic = ic_frame["ic"].to_numpy(dtype=np.float64)
        ax.hist(ic, bins=40, color="tab:blue", alpha=0.8)
        if len(ic):
            ax.axvline(ic.mean(), color="black", linestyle="--", label=f"mean {ic.mean():.4f}")
            ax.legend()
        ax.set_title("Daily rank IC")
        ax.set_xlabel("IC")
        return self._save(fig, "ic_histogram.png")

    def plot_signal_distribution(self, signals):
        fig, ax = plt.subplots(figsize=(7, 5))
        ax.hist(signals.scores, bins=60, color="tab:purple", alpha=0.8)
        ax.set_title("Signal distribution")
        ax.set_xlabel("score")
        return self._save(fig, "signal_distribution.png")

    def plot_return_scatter(self, scores, future_returns):
        """Score against realised forward return over the scored cells"""
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        future_returns = np.asarray(future_returns, dtype=np.float64).reshape(-1)
        ok = np.isfinite(scores) & np.isfinite(future_returns)
        fig, ax = plt.subplots(figsize=(7, 6))
        ax.scatter(scores[ok], future_returns[ok], s=2, alpha=0.3, color="tab:gray")
        ax.set_xlabel("score")
        ax.set_ylabel("forward return")
        ax.set_title("Score vs forward return")
        ax.grid(True, alpha=0.3)
        return self._save(fig, "return_scatter.png")

    def plot_attribution_heatmap(self, grid, rows, cols):
        values = grid_matrix(grid, rows, cols)
        limit = np.nanmax(np.abs(values)) if np.isfinite(values).any() else 1.0
        limit = limit if limit > 0 else 1.0

        fig, ax = plt.subplots(figsize=(2.6 * cols, 0.9 * rows + 1))
        image = ax.imshow(values, cmap="RdBu_r", vmin=-limit, vmax=limit, aspect="auto")
        for cell in grid.itertuples(index=False):
            if cell.factor:
                label = cell.alias or cell.factor.removeprefix("alpha_")
                ax.text(cell.col, cell.row, f"{label}\n{cell.value:.2e}", ha="center", va="center", fontsize=6)
        ax.set_xticks(range(cols))
        ax.set_yticks(range(rows))
        ax.set_title("Mean signed attribution")
        fig.colorbar(image, ax=ax)
        return self._save(fig, "attribution_heatmap.png")
