import logging
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ("model", "ic_mean", "ic_std", "ir", "icir", "ann_return", "ann_vol", "sharpe")


class ComparisonManager:
    """
    Collects the evaluation of several trained models on the same dataset
    and reports which one ranks best by ICIR and by long-short Sharpe
    """

    def __init__(self):
        self.reports = {}

    def record(self, model_kind, report):
        self.reports[model_kind] = report
        logger.info("Recorded %s: IC %.4f, ICIR %s", model_kind, report.ic.ic_mean,
                    f"{report.ic.icir:.4f}" if report.ic.defined else "undefined")

    def to_frame(self):
        rows = []
        for kind, report in self.reports.items():
            leg = report.legs["long_short"]
            rows.append({
                "model": kind,
                "ic_mean": report.ic.ic_mean,
                "ic_std": report.ic.ic_std,
                "ir": report.ic.ir,
                "icir": report.ic.icir,
                "ann_return": leg["ann_return"],
                "ann_vol": leg["ann_vol"],
                "sharpe": leg["sharpe"],
            })
        return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))

    def winners(self):
        """Best model by ICIR and by Sharpe; None where no model has the metric defined"""
        frame = self.to_frame()
        best = {}
        for metric in ("icir", "sharpe"):
            values = frame[metric].to_numpy(dtype=np.float64)
            ok = np.isfinite(values)
            best[metric] = str(frame["model"].iloc[int(np.nanargmax(np.where(ok, values, np.nan)))]) if ok.any() else None
        return best

    def print_comparison_summary(self):
        frame = self.to_frame()
        best = self.winners()
        print("\n" + "=" * 50)
        print("MODEL COMPARISON")
        print("=" * 50)
        print(f"{'Model':<8}{'IC':>9}{'IC Std':>9}{'ICIR':>9}{'Sharpe':>9}")
        for row in frame.itertuples(index=False):
            print(f"{row.model:<8}{row.ic_mean:>9.4f}{row.ic_std:>9.4f}{row.icir:>9.4f}{row.sharpe:>9.4f}")
        print(f"\nBest by ICIR: {best['icir'] or 'n/a'}")
        print(f"Best by long-short Sharpe: {best['sharpe'] or 'n/a'}")
        print("=" * 50)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
        logger.info("Wrote model comparison to %s", path)
        return path
