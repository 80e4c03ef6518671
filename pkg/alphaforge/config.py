"""
Run configuration

One INI-style file of `key = value` lines under [section] headers. Every key
has a default; unknown sections and keys are rejected by name. The
ALPHAFORGE_SEED environment variable overrides [model] seed and [panel] seed.
"""
import configparser
import hashlib
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from alphaforge.alpha_parser import BUNDLED_FACTOR_FILE, FACTORS_DIR
from alphaforge.attribution import BASELINES, parse_grid
from alphaforge.errors import ConfigError
from alphaforge.indicators import IndicatorParams
from alphaforge.models import MODEL_KINDS
from alphaforge.scoring import SIGNAL_MODES
from alphaforge.synthetic import PlantedSignal, SyntheticSpec

logger = logging.getLogger(__name__)

SEED_ENV = "ALPHAFORGE_SEED"


def _split_list(text):
    return [part.strip() for part in str(text).split(",") if part.strip()]


@dataclass
class PanelConfig:
    # empty path means a synthetic panel built from the knobs below
    path: str = ""
    n_symbols: int = 100
    n_days: int = 750
    seed: int = 7
    start_date: str = "2021-01-04"
    planted_factors: str = ""
    planted_coefficients: str = ""
    planted_interaction: float = 0.0
    planted_noise: float = 0.01
    planted_anchor: float = 0.1

    @property
    def synthetic(self):
        return not self.path

    def planted_signal(self, horizon):
        names = _split_list(self.planted_factors)
        if not names:
            return None
        try:
            coefficients = [float(c) for c in _split_list(self.planted_coefficients)]
        except ValueError:
            raise ConfigError(f"panel.planted_coefficients must be numbers, got {self.planted_coefficients}") from None
        if len(coefficients) != len(names):
            raise ConfigError("panel.planted_factors and panel.planted_coefficients differ in length")
        return PlantedSignal(dict(zip(names, coefficients)), interaction=self.planted_interaction,
                             noise_std=self.planted_noise, anchor=self.planted_anchor, horizon=horizon)

    def synthetic_spec(self, horizon=5):
        return SyntheticSpec(n_symbols=self.n_symbols, n_days=self.n_days, seed=self.seed,
                             planted_signal=self.planted_signal(horizon), start_date=self.start_date)


@dataclass
class FactorConfig:
    # bare names are looked up among the bundled factor files
    files: str = BUNDLED_FACTOR_FILE.name
    include: str = ""

    @property
    def paths(self):
        paths = []
        for name in _split_list(self.files):
            path = Path(name)
            if not path.exists() and path.name == name and (FACTORS_DIR / name).exists():
                path = FACTORS_DIR / name
            paths.append(path)
        return paths

    @property
    def selection(self):
        return _split_list(self.include)


@dataclass
class IndicatorConfig:
    rsi_window: int = 14
    macd_fast: int = 12
    macd_slow: int = 26
    macd_signal: int = 9
    vwap_window: int = 5
    boll_window: int = 20
    boll_k: float = 2.0

    def to_params(self):
        return IndicatorParams(**asdict(self))


@dataclass
class DatasetConfig:
    cutoff_date: str = "2023-01-01"
    clip_lo: float = 0.05
    clip_hi: float = 0.95
    horizon_days: int = 5
    min_peers: int = 2


@dataclass
class ModelConfig:
    kind: str = "mlp"
    lr: float = 5e-4
    weight_decay: float = 1e-3
    decoupled_weight_decay: bool = False
    clip_norm: float = 0.5
    scheduler_factor: float = 0.7
    scheduler_patience: int = 5
    scheduler_min_delta: float = 1e-5
    early_stop_patience: int = 15
    batch_size: int = 256
    max_epochs: int = 500
    dropout: float = 0.1
    cls_weight: float = 0.5
    seed: int = 42
    signal: str = "reg"
    svr_c: float = 1.0
    svr_epsilon: float = 0.1
    svr_iterations: int = 3000
    svr_step: float = 1.0
    svr_standardize_target: bool = True


@dataclass
class EvaluationConfig:
    k: int = 5
    holding: int = 1
    annualization: int = 252


@dataclass
class AttributionConfig:
    n_perms: int = 2048
    grid: str = "8x5"
    n_samples: int = 64
    seed: int = 11
    baseline: str = "validation_mean"


@dataclass
class OutputConfig:
    dir: str = "runs/default"
    figures: bool = False


SECTIONS = {
    "panel": PanelConfig,
    "factors": FactorConfig,
    "indicators": IndicatorConfig,
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "evaluation": EvaluationConfig,
    "attribution": AttributionConfig,
    "output": OutputConfig,
}

# published defaults, pinned by the test suite
STATED_DEFAULTS = {
    "model.lr": 5e-4,
    "model.weight_decay": 1e-3,
    "model.clip_norm": 0.5,
    "model.scheduler_factor": 0.7,
    "model.scheduler_patience": 5,
    "model.early_stop_patience": 15,
    "model.cls_weight": 0.5,
    "dataset.clip_lo": 0.05,
    "dataset.clip_hi": 0.95,
    "dataset.horizon_days": 5,
    "evaluation.k": 5,
}


def _coerce(section, key, default, text):
    text = text.strip()
    try:
        if isinstance(default, bool):
            state = configparser.ConfigParser.BOOLEAN_STATES.get(text.lower())
            if state is None:
                raise ValueError(text)
            return state
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got '{text}'") from None
    return text


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass
class RunConfig:
    panel: PanelConfig = field(default_factory=PanelConfig)
    factors: FactorConfig = field(default_factory=FactorConfig)
    indicators: IndicatorConfig = field(default_factory=IndicatorConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    attribution: AttributionConfig = field(default_factory=AttributionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def set(self, section, key, value):
        """Set one knob from its text form, rejecting unknown names"""
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(self, section)
        names = {f.name for f in fields(target)}
        if key not in names:
            raise ConfigError(f"unknown config key {section}.{key}")
        default = getattr(SECTIONS[section](), key)
        setattr(target, key, _coerce(section, key, default, str(value)))

    def items(self):
        for section in sorted(SECTIONS):
            values = asdict(getattr(self, section))
            for key in sorted(values):
                yield section, key, values[key]

    def dump(self):
        lines, current = [], None
        for section, key, value in self.items():
            if section != current:
                if current is not None:
                    lines.append("")
                lines.append(f"[{section}]")
                current = section
            lines.append(f"{key} = {_render(value)}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()

    @staticmethod
    def defaults_table():
        defaults = RunConfig()
        table = {}
        for name in STATED_DEFAULTS:
            section, key = name.split(".")
            table[name] = getattr(getattr(defaults, section), key)
        return table

    def validate(self):
        d, m, e, a = self.dataset, self.model, self.evaluation, self.attribution
        if not 0.0 <= d.clip_lo < d.clip_hi <= 1.0:
            raise ConfigError(f"dataset clip quantiles need 0 <= clip_lo < clip_hi <= 1, got {d.clip_lo}, {d.clip_hi}")
        if d.horizon_days < 1:
            raise ConfigError("dataset.horizon_days must be >= 1")
        if d.min_peers < 1:
            raise ConfigError("dataset.min_peers must be >= 1")
        try:
            np.datetime64(d.cutoff_date, "D")
            np.datetime64(self.panel.start_date, "D")
        except ValueError as exc:
            raise ConfigError(f"bad date: {exc}") from None
        try:
            self.indicators.to_params().validate()
        except ValueError as exc:
            raise ConfigError(f"indicators: {exc}") from None

        if m.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {', '.join(MODEL_KINDS)}, got {m.kind}")
        if m.signal not in SIGNAL_MODES:
            raise ConfigError(f"model.signal must be one of {', '.join(SIGNAL_MODES)}, got {m.signal}")
        for key in ("lr", "clip_norm", "svr_c", "svr_step"):
            if getattr(m, key) <= 0:
                raise ConfigError(f"model.{key} must be > 0")
        for key in ("weight_decay", "scheduler_min_delta", "svr_epsilon", "cls_weight"):
            if getattr(m, key) < 0:
                raise ConfigError(f"model.{key} must be >= 0")
        for key in ("scheduler_patience", "early_stop_patience", "batch_size", "max_epochs", "svr_iterations"):
            if getattr(m, key) < 1:
                raise ConfigError(f"model.{key} must be >= 1")
        if not 0.0 < m.scheduler_factor < 1.0:
            raise ConfigError("model.scheduler_factor must be in (0, 1)")
        if not 0.0 <= m.dropout < 1.0:
            raise ConfigError("model.dropout must be in [0, 1)")

        if e.k < 1 or e.holding < 1 or e.annualization < 1:
            raise ConfigError("evaluation k, holding and annualization must be >= 1")
        if a.n_perms < 1 or a.n_samples < 1:
            raise ConfigError("attribution n_perms and n_samples must be >= 1")
        if a.baseline not in BASELINES:
            raise ConfigError(f"attribution.baseline must be one of {', '.join(BASELINES)}, got {a.baseline}")
        parse_grid(a.grid, 0)
        for seed in (m.seed, self.panel.seed, a.seed):
            if not 0 <= seed < 2 ** 64:
                raise ConfigError("seeds must be unsigned 64-bit integers")

        if self.panel.synthetic:
            self.panel.synthetic_spec(d.horizon_days).validate()
        if not self.factors.paths:
            raise ConfigError("factors.files names no factor file")
        return self


def _apply_seed_override(config):
    value = os.environ.get(SEED_ENV)
    if value is None or not value.strip():
        return
    try:
        seed = int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got '{value}'") from None
    logger.info("%s=%d overrides the model and panel seeds", SEED_ENV, seed)
    config.model.seed = seed
    config.panel.seed = seed


def parse_config(text, origin="<string>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None

    config = RunConfig()
    for section in parser.sections():
        for key, value in parser.items(section):
            config.set(section, key, value)
    _apply_seed_override(config)
    return config


def load_config(path=None):
    """Defaults, then the file at `path` (if any), then the seed override; not yet validated"""
    if path is None:
        config = RunConfig()
        _apply_seed_override(config)
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), str(path))
