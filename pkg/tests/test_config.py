from pathlib import Path

import pytest

from alphaforge.alpha_parser import FACTORS_DIR
from alphaforge.config import SEED_ENV, RunConfig, load_config, parse_config
from alphaforge.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


class TestDefaults:
    def test_published_defaults(self):
        assert RunConfig.defaults_table() == {
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

    def test_defaults_validate(self):
        RunConfig().validate()

    def test_svr_and_attribution_defaults(self):
        config = RunConfig()
        assert (config.model.svr_c, config.model.svr_epsilon) == (1.0, 0.1)
        assert config.attribution.n_perms == 2048
        assert config.attribution.grid == "8x5"

    def test_bundled_config_files_validate(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            load_config(path).validate()


class TestParse:
    def test_typed_values(self):
        config = parse_config("[model]\nlr = 0.01\nbatch_size = 32\ndecoupled_weight_decay = yes\n"
                              "[output]\ndir = runs/x  # comment\n")
        assert config.model.lr == 0.01
        assert config.model.batch_size == 32
        assert config.model.decoupled_weight_decay is True
        assert config.output.dir == "runs/x"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key model.learning_rate"):
            parse_config("[model]\nlearning_rate = 0.1\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"unknown config section \[optimizer\]"):
            parse_config("[optimizer]\nlr = 0.1\n")

    def test_wrong_type(self):
        with pytest.raises(ConfigError, match="model.lr: expected float, got 'fast'"):
            parse_config("[model]\nlr = fast\n")

    def test_bad_boolean(self):
        with pytest.raises(ConfigError, match="output.figures"):
            parse_config("[output]\nfigures = maybe\n")

    def test_malformed_file(self):
        with pytest.raises(ConfigError):
            parse_config("lr = 0.1\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.ini")

    def test_seed_override(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "99")
        config = parse_config("[model]\nseed = 1\n")
        assert config.model.seed == 99
        assert config.panel.seed == 99

    def test_bad_seed_override(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        with pytest.raises(ConfigError, match=SEED_ENV):
            load_config()


class TestValidate:
    @pytest.mark.parametrize("text, message", [
        ("[dataset]\nclip_lo = 0.9\nclip_hi = 0.1\n", "clip quantiles"),
        ("[model]\nkind = lstm\n", "model.kind"),
        ("[model]\nsignal = vote\n", "model.signal"),
        ("[model]\nlr = 0\n", "model.lr"),
        ("[model]\nscheduler_factor = 1.5\n", "scheduler_factor"),
        ("[evaluation]\nk = 0\n", "evaluation"),
        ("[attribution]\ngrid = wide\n", "grid"),
        ("[attribution]\nbaseline = median\n", "baseline"),
        ("[panel]\nn_days = 100\n", "250"),
        ("[indicators]\nmacd_fast = 30\n", "indicators"),
        ("[dataset]\ncutoff_date = someday\n", "bad date"),
    ])
    def test_rejected(self, text, message):
        with pytest.raises(ConfigError, match=message):
            parse_config(text).validate()

    def test_planted_lists_must_match(self):
        config = parse_config("[panel]\nplanted_factors = alpha_kline_body_strength\n"
                              "planted_coefficients = 0.1, 0.2\n")
        with pytest.raises(ConfigError, match="differ in length"):
            config.validate()


class TestDumpAndHash:
    def test_dump_is_sorted_and_reparses(self):
        config = parse_config("[model]\nlr = 0.01\n")
        text = config.dump()
        assert text.index("[attribution]") < text.index("[model]")
        assert parse_config(text).dump() == text

    def test_hash_follows_knobs(self):
        base = RunConfig().config_hash()
        assert RunConfig().config_hash() == base
        assert parse_config("[evaluation]\nk = 10\n").config_hash() != base

    def test_bare_factor_file_resolves_to_bundled_directory(self):
        config = parse_config("[factors]\nfiles = behavioral_43.alpha, heatmap_extras.alpha\n")
        assert config.factors.paths == [FACTORS_DIR / "behavioral_43.alpha", FACTORS_DIR / "heatmap_extras.alpha"]

    def test_set_from_text(self):
        config = RunConfig()
        config.set("evaluation", "k", 10)
        assert config.evaluation.k == 10
