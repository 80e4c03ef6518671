"""
Command-line entry point

    alphaforge <subcommand> [--config FILE] [--out PATH] [options]

`--out` names the run directory, except for train, score and attribute
where it names the checkpoint, signals or attribution file and that
file's directory becomes the run directory.

Subcommands: synth, factors, dataset, train, score, evaluate, attribute,
pipeline (every stage in order) and compare (mlp, cnn and svr side by side).
Exit status: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
import argparse
import logging
import sys
from pathlib import Path

from alphaforge.config import load_config
from alphaforge.errors import AlphaForgeError
from alphaforge.models import MODEL_KINDS
from alphaforge.pipeline import Pipeline
from alphaforge.scoring import SIGNAL_MODES

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

STAGES = {
    "synth": Pipeline.run_synth,
    "factors": Pipeline.run_factors,
    "dataset": Pipeline.run_dataset,
    "train": Pipeline.run_train,
    "score": Pipeline.run_score,
    "evaluate": Pipeline.run_evaluate,
    "attribute": Pipeline.run_attribute,
    "pipeline": Pipeline.run_pipeline,
    "compare": Pipeline.run_compare,
}

# command-line option -> (config section, key)
CONFIG_OPTIONS = {
    "factors": ("factors", "files"),
    "model": ("model", "kind"),
    "signal": ("model", "signal"),
    "k": ("evaluation", "k"),
    "holding": ("evaluation", "holding"),
    "n_perms": ("attribution", "n_perms"),
    "grid": ("attribution", "grid"),
}

# command-line option -> artifact path override
PATH_OPTIONS = {
    "panel": "panel",
    "dataset": "dataset",
    "ckpt": "checkpoint",
    "signals": "signals",
}

# subcommands whose --out is a file -> artifact written there
OUTPUT_FILES = {
    "train": "checkpoint",
    "score": "signals",
    "attribute": "attribution",
}


def _common(parser, out_help="output directory (overrides [output] dir)"):
    parser.add_argument("--config", help="INI run configuration (defaults apply without one)")
    parser.add_argument("--out", help=out_help)
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser():
    parser = argparse.ArgumentParser(prog="alphaforge",
                                     description="Behavioural alpha factors, dual-task models and signal evaluation")
    commands = parser.add_subparsers(dest="command", required=True)

    specs = {
        "synth": "generate a synthetic OHLCV panel",
        "factors": "evaluate the factor file on the panel",
        "dataset": "build the standardised training/validation table",
        "train": "train one model and write its checkpoint",
        "score": "score the validation split with a checkpoint",
        "evaluate": "IC, ICIR, Sharpe and the top-k / bottom-k backtest",
        "attribute": "Shapley attribution heatmap grid",
        "pipeline": "run every stage in order",
        "compare": "train and evaluate mlp, cnn and svr on one dataset",
    }
    for name, help_text in specs.items():
        sub = commands.add_parser(name, help=help_text)
        if name in OUTPUT_FILES:
            _common(sub, f"output {OUTPUT_FILES[name]} file; its directory is the run directory")
        else:
            _common(sub)
        if name not in ("synth", "evaluate"):
            sub.add_argument("--factors", help="comma-separated factor files")
        if name in ("factors", "dataset", "evaluate", "pipeline", "compare"):
            sub.add_argument("--panel", help="panel CSV (date,symbol,open,high,low,close,volume)")
        if name in ("train", "score", "attribute"):
            sub.add_argument("--dataset", help="dataset CSV written by the dataset stage")
        if name in ("train", "pipeline"):
            sub.add_argument("--model", choices=MODEL_KINDS)
        if name in ("score", "attribute"):
            sub.add_argument("--ckpt", help="model checkpoint")
        if name in ("score", "pipeline"):
            sub.add_argument("--signal", choices=SIGNAL_MODES)
        if name == "evaluate":
            sub.add_argument("--signals", help="signals CSV (date,symbol,score)")
        if name in ("evaluate", "pipeline", "compare"):
            sub.add_argument("--k", type=int)
            sub.add_argument("--holding", type=int)
        if name in ("attribute", "pipeline"):
            sub.add_argument("--n-perms", type=int)
            sub.add_argument("--grid", help="ROWSxCOLS or auto")
    return parser


def configure_logging(level):
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, stream=sys.stderr, force=True)


def prepare(args):
    """Load, override and validate the run configuration; returns (config, path overrides)"""
    config = load_config(args.config)
    for option, (section, key) in CONFIG_OPTIONS.items():
        value = getattr(args, option, None)
        if value is not None:
            config.set(section, key, value)
    paths = {artifact: getattr(args, option) for option, artifact in PATH_OPTIONS.items()
             if getattr(args, option, None)}
    if args.out:
        artifact = OUTPUT_FILES.get(args.command)
        if artifact:
            paths[artifact] = args.out
            config.output.dir = str(Path(args.out).parent)
        else:
            config.output.dir = args.out
    config.validate()
    return config, paths


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config, paths = prepare(args)
        pipeline = Pipeline(config, overrides=paths)
        STAGES[args.command](pipeline)
        pipeline.write_manifest(args.command)
    except AlphaForgeError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
