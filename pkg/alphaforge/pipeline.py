import hashlib
import logging
import platform
from pathlib import Path

import matplotlib
import networkx
import numpy as np
import pandas as pd
import scipy

import alphaforge
from alphaforge import attribution as attr
from alphaforge.alpha_parser import load_factor_files
from alphaforge.checkpoint import ModelCheckpoint
from alphaforge.comparison_manager import ComparisonManager
from alphaforge.dataset import TrainingDataset, forward_returns, split_and_assemble
from alphaforge.display_manager import DisplayManager
from alphaforge.errors import MissingArtifactError
from alphaforge.evalkit import (SignalFrame, evaluate_signals, write_cumrets, write_ic_series,
                                write_metrics)
from alphaforge.factor_evaluator import FactorEvaluator
from alphaforge.models import MODEL_KINDS
from alphaforge.panel import load_csv
from alphaforge.scoring import score
from alphaforge.synthetic import generate_synthetic
from alphaforge.training_manager import train_model

logger = logging.getLogger(__name__)

ARTIFACTS = {
    "panel": "panel.csv",
    "factors": "factors.csv",
    "factor_report": "factor_report.csv",
    "dataset": "dataset.csv",
    "checkpoint": "model.ckpt",
    "signals": "signals.csv",
    "ic_series": "ic_series.csv",
    "metrics": "metrics.json",
    "cumrets": "cumrets.csv",
    "attribution": "attribution.csv",
    "attribution_by_structure": "attribution_by_structure.csv",
    "comparison": "model_comparison.csv",
    "manifest": "run_manifest.txt",
}


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Pipeline:
    """
    Runs the pipeline stages against one validated RunConfig
    Each stage reads its inputs from the output directory (or an explicit
    override path) and writes its artifacts there
    """

    def __init__(self, config, out_dir=None, overrides=None):
        self.config = config
        self.out_dir = Path(out_dir or config.output.dir)
        self.overrides = {key: Path(value) for key, value in (overrides or {}).items() if value}
        self.display_manager = DisplayManager(self.out_dir)
        self.outputs = []
        self._panel = None
        self._factor_set = None

    def path(self, artifact):
        if artifact in self.overrides:
            return self.overrides[artifact]
        return self.out_dir / ARTIFACTS[artifact]

    def _written(self, path):
        path = Path(path)
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def _require(self, artifact):
        path = self.path(artifact)
        if not path.exists():
            raise MissingArtifactError(path.name, path)
        return path

    # inputs

    def panel(self):
        if self._panel is None:
            if "panel" in self.overrides:
                self._panel = load_csv(self._require("panel"))
            elif not self.config.panel.synthetic:
                self._panel = load_csv(self.config.panel.path)
            else:
                self._panel = load_csv(self._require("panel"))
        return self._panel

    def factor_set(self):
        if self._factor_set is None:
            self._factor_set = load_factor_files(self.config.factors.paths)
        return self._factor_set

    def _selected_names(self):
        factor_set = self.factor_set()
        if self.config.factors.selection:
            return factor_set.resolve_selection(self.config.factors.selection)
        return factor_set.names

    def _features(self):
        evaluator = FactorEvaluator(self.panel(), self.config.indicators.to_params())
        frame = evaluator.evaluate_all(self.factor_set())
        return evaluator, frame.select(self._selected_names())

    def dataset(self):
        d = self.config.dataset
        return TrainingDataset.load_csv(self._require("dataset"), self._selected_names(), d.cutoff_date)

    # stages

    def run_synth(self):
        spec = self.config.panel.synthetic_spec(self.config.dataset.horizon_days)
        panel = generate_synthetic(spec)
        path = self._written(panel.export_csv(self.out_dir / ARTIFACTS["panel"]))
        self._panel = panel
        self._print_summary("SYNTHETIC PANEL", [
            f"Symbols: {panel.n_symbols}",
            f"Days: {panel.n_dates} ({panel.dates[0]} .. {panel.dates[-1]})",
            f"Planted signal: {'yes' if spec.planted_signal else 'no'}",
            f"Written: {path}",
        ])
        return panel

    def run_factors(self):
        evaluator, frame = self._features()
        self._written(frame.export_csv(self.path("factors")))
        report = evaluator.report(frame)
        report_path = self.path("factor_report")
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(report_path, index=False, lineterminator="\n", float_format="%.17g")
        self._written(report_path)
        sparse = report[report["defined_ratio"] < 0.5]
        self._print_summary("FACTOR EVALUATION", [
            f"Factors: {frame.n_factors}",
            f"Mean defined ratio: {report['defined_ratio'].mean():.3f}",
            f"Factors under 50% defined: {len(sparse)}",
            f"Unstabilised zero divisions: {int(report['zero_divisions'].sum())}",
        ])
        return frame

    def run_dataset(self):
        d = self.config.dataset
        _, frame = self._features()
        targets = forward_returns(self.panel().close, d.horizon_days)
        dataset = split_and_assemble(frame, targets, d.cutoff_date, d.clip_lo, d.clip_hi, d.min_peers)
        path = self._written(dataset.export_csv(self.path("dataset")))
        counts = dataset.counts()
        self._print_summary("DATASET", [
            f"Train samples: {counts['train']}",
            f"Validation samples: {counts['validation']}",
            f"Clip bounds: [{dataset.clip_bounds[0]:.6g}, {dataset.clip_bounds[1]:.6g}]",
            f"Written: {path}",
        ])
        return dataset

    def run_train(self, kind=None, dataset=None, path=None):
        kind = kind or self.config.model.kind
        if dataset is None:
            dataset = self.dataset()
        checkpoint = train_model(kind, dataset, self.config.model)
        path = self._written(checkpoint.save(path or self.path("checkpoint")))
        metrics = checkpoint.metrics
        self._print_summary(f"TRAINING ({kind.upper()})", [
            f"Best validation RMSE: {metrics.get('best_val_rmse', float('nan')):.6g}",
            f"Train RMSE: {metrics['train_rmse']:.6g}",
            f"Epochs run: {metrics.get('epochs_run', 'n/a')}",
            f"Written: {path}",
        ])
        return checkpoint

    def run_score(self, checkpoint=None, dataset=None, signals_path=None, signal=None):
        """Scores the validation split, the held-out period the evaluation runs on"""
        if checkpoint is None:
            checkpoint = ModelCheckpoint.load(self._require("checkpoint"))
        if dataset is None:
            dataset = self.dataset()
        signals = score(checkpoint, dataset.validation(), signal or self.config.model.signal)
        self._written(signals.export_csv(signals_path or self.path("signals")))
        return signals

    def run_evaluate(self, signals=None, prefix=""):
        e = self.config.evaluation
        if signals is None:
            signals = SignalFrame.load_csv(self.path("signals"))
        panel = self.panel()
        report, ic_frame, backtest = evaluate_signals(signals, panel, k=e.k, holding=e.holding,
                                                      horizon=self.config.dataset.horizon_days,
                                                      annualization=e.annualization)
        self._written(write_ic_series(ic_frame, self.out_dir / f"{prefix}{ARTIFACTS['ic_series']}"))
        self._written(write_metrics(report, self.out_dir / f"{prefix}{ARTIFACTS['metrics']}"))
        self._written(write_cumrets(backtest, self.out_dir / f"{prefix}{ARTIFACTS['cumrets']}"))

        if self.config.output.figures and not prefix:
            self._written(self.display_manager.plot_cumulative_returns(backtest))
            self._written(self.display_manager.plot_ic_histogram(ic_frame))
            self._written(self.display_manager.plot_signal_distribution(signals))
            matrix = signals.to_matrix(panel.dates, panel.symbols)
            future = forward_returns(panel.close, self.config.dataset.horizon_days)
            self._written(self.display_manager.plot_return_scatter(matrix, future))

        leg = report.legs["long_short"]
        self._print_summary(f"EVALUATION{' (' + prefix.rstrip('_').upper() + ')' if prefix else ''}", [
            f"IC mean: {report.ic.ic_mean:.4f}   IC std: {report.ic.ic_std:.4f}",
            f"ICIR: {report.ic.icir:.4f}" if report.ic.defined else "ICIR: undefined",
            f"IC days: {report.ic.n_days}",
            f"Long-short Sharpe: {leg['sharpe']:.4f}   cumulative: {leg['cumulative_return']:.4f}",
            f"Top-{e.k} cumulative: {report.legs['top']['cumulative_return']:.4f}",
        ])
        return report

    def run_attribute(self, checkpoint=None, dataset=None):
        a = self.config.attribution
        if checkpoint is None:
            checkpoint = ModelCheckpoint.load(self._require("checkpoint"))
        if dataset is None:
            dataset = self.dataset()
        names = list(checkpoint.factor_names)
        rows, cols = attr.parse_grid(a.grid, len(names))
        # fail on grid capacity before the expensive part
        attr.heatmap_grid(names, np.zeros(len(names)), rows, cols)

        validation = dataset.validation()
        model = checkpoint.build_model()
        baseline = attr.baseline_vector(validation.X, a.baseline)
        rows_idx = attr.sample_rows(len(validation), a.n_samples, a.seed)
        result = attr.attribute(model.predict, validation.X[rows_idx], baseline, names,
                                n_permutations=a.n_perms, seed=a.seed)

        grid = attr.heatmap_grid(names, result.signed_mean, rows, cols)
        self._written(attr.write_frame(grid, self.path("attribution")))
        by_structure = attr.structure_aggregate(result, self.factor_set())
        self._written(attr.write_frame(by_structure, self.out_dir / ARTIFACTS["attribution_by_structure"]))
        if self.config.output.figures:
            self._written(self.display_manager.plot_attribution_heatmap(grid, rows, cols))

        top = np.argsort(-result.mean_abs, kind="stable")[:5]
        self._print_summary("ATTRIBUTION", [
            f"Samples: {len(rows_idx)}   orderings: {a.n_perms}   grid: {rows}x{cols}",
            f"Efficiency gap: {result.efficiency_gap:.3g}",
            "Largest mean |phi|: " + ", ".join(names[i] for i in top),
        ])
        return result

    def run_pipeline(self):
        if self.config.panel.synthetic and "panel" not in self.overrides:
            self.run_synth()
        self.run_factors()
        dataset = self.run_dataset()
        checkpoint = self.run_train(dataset=dataset)
        signals = self.run_score(checkpoint, dataset)
        report = self.run_evaluate(signals)
        self.run_attribute(checkpoint, dataset)
        return report

    def run_compare(self):
        """Train and evaluate every model kind on one dataset"""
        if self.path("dataset").exists():
            dataset = self.dataset()
        else:
            if self.config.panel.synthetic and not self.path("panel").exists():
                self.run_synth()
            dataset = self.run_dataset()
        manager = ComparisonManager()
        for kind in MODEL_KINDS:
            checkpoint = self.run_train(kind, dataset, self.out_dir / f"model_{kind}.ckpt")
            signals = self.run_score(checkpoint, dataset, self.out_dir / f"signals_{kind}.csv", signal="reg")
            manager.record(kind, self.run_evaluate(signals, prefix=f"{kind}_"))
        self._written(manager.write_csv(self.path("comparison")))
        manager.print_comparison_summary()
        return manager

    # reporting

    def _print_summary(self, title, lines):
        print("\n" + "=" * 50)
        print(title)
        print("=" * 50)
        for line in lines:
            print(line)
        print("=" * 50)

    def write_manifest(self, subcommand):
        """Plain-text key = value record of the run; outputs are listed with their SHA-256"""
        config = self.config
        lines = [
            f"subcommand = {subcommand}",
            f"config_hash = {config.config_hash()}",
            f"seed = {config.model.seed}",
            f"panel_seed = {config.panel.seed}",
            f"alphaforge_version = {alphaforge.__version__}",
            f"python_version = {platform.python_version()}",
            f"numpy_version = {np.__version__}",
            f"pandas_version = {pd.__version__}",
            f"scipy_version = {scipy.__version__}",
            f"networkx_version = {networkx.__version__}",
            f"matplotlib_version = {matplotlib.__version__}",
            "",
            "[config]",
            config.dump().rstrip("\n"),
            "",
            "[outputs]",
        ]
        for path in self.outputs:
            if path.exists():
                lines.append(f"{path.as_posix()} = {sha256_file(path)}")
        path = self.out_dir / ARTIFACTS["manifest"]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info("Wrote run manifest %s", path)
        return path
