import pytest

from src.config import env_float, env_int
from src.errors import CheckpointError, ConfigError
from src.models.run_config import (
    ModelConfig,
    RunConfig,
    build_run_config,
    canonical_key,
    load_run_config,
    model_config_from_meta,
    parse_config_text,
)


class TestDefaults:
    def test_documented_defaults(self):
        cfg = RunConfig()
        assert cfg.model.feature_channels == 32
        assert cfg.model.groups == 16
        assert cfg.model.max_disparity == 192
        assert cfg.model.disparity_bins == 48
        assert cfg.model.mca.pooling == "mean"
        assert cfg.model.hfdo.omega == 0.5
        assert cfg.train.lr == 1e-4
        assert (cfg.train.beta1, cfg.train.beta2) == (0.9, 0.999)
        assert (cfg.train.crop_height, cfg.train.crop_width) == (256, 512)
        assert cfg.train.steps is None


class TestKeys:
    @pytest.mark.parametrize(
        "key,expected",
        [
            ("mca.pooling", "model.mca.pooling"),
            ("hfdo.omega", "model.hfdo.omega"),
            ("groups", "model.groups"),
            ("lr", "train.lr"),
            ("checkpoint", "paths.checkpoint"),
            ("model.groups", "model.groups"),
            ("nonsense", "nonsense"),
        ],
    )
    def test_canonical_key(self, key, expected):
        assert canonical_key(key) == expected

    def test_parse_text(self):
        text = "# comment\n\nmca.pooling = max\nlr=0.001  # faster\n"
        assert parse_config_text(text) == {"mca.pooling": "max", "lr": "0.001"}

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("lr=1\njust words\n")


class TestBuild:
    def test_values_are_coerced(self):
        cfg = build_run_config({"mca.pooling": "max", "lr": "0.001", "hfdo.enabled": "false", "steps": "5"})
        assert cfg.model.mca.pooling == "max"
        assert cfg.train.lr == 0.001
        assert cfg.model.hfdo.enabled is False
        assert cfg.train.steps == 5

    @pytest.mark.parametrize(
        "flat",
        [
            {"unknown_key": "1"},
            {"mca.pooling": "median"},
            {"max_disparity": "30"},
            {"feature_channels": "24", "groups": "16"},
            {"groups": "12"},
            {"hfdo.omega": "1.5"},
            {"crop_height": "100"},
        ],
    )
    def test_invalid(self, flat):
        with pytest.raises(ConfigError):
            build_run_config(flat)

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lr=0.01\nseed=3\ngroups=8\n")
        cfg = load_run_config(path, {"train.lr": 0.5, "train.seed": None})
        assert cfg.train.lr == 0.5
        assert cfg.train.seed == 3
        assert cfg.model.groups == 8

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.cfg")


class TestCheckpointMeta:
    def test_round_trip(self):
        cfg = ModelConfig(groups=8, feature_channels=16)
        assert model_config_from_meta({"model": cfg.model_dump()}) == cfg

    def test_absent(self):
        assert model_config_from_meta({}) is None

    def test_invalid(self):
        with pytest.raises(CheckpointError):
            model_config_from_meta({"model": {"groups": 7}})


class TestEnvironment:
    @pytest.mark.parametrize("raw, expected", [("4", 4), ("0", 1), ("-3", 1), ("four", 1), ("2.5", 1)])
    def test_thread_count(self, monkeypatch, raw, expected):
        monkeypatch.setenv("RRESM_THREADS", raw)
        assert env_int("RRESM_THREADS", 1) == expected

    def test_unset_uses_default(self, monkeypatch):
        monkeypatch.delenv("RRESM_THREADS", raising=False)
        assert env_int("RRESM_THREADS", 3) == 3

    def test_float_setting(self, monkeypatch):
        monkeypatch.setenv("RRESM_ERROR_MAP_SCALE", "big")
        assert env_float("RRESM_ERROR_MAP_SCALE", 8.0) == 8.0
        monkeypatch.setenv("RRESM_ERROR_MAP_SCALE", "2.5")
        assert env_float("RRESM_ERROR_MAP_SCALE", 8.0) == 2.5


class TestCheckpointDefault:
    @pytest.fixture(autouse=True)
    def no_env_checkpoint(self, monkeypatch):
        monkeypatch.setattr("src.models.run_config.CHECKPOINT_FILE", None)

    def test_follows_output_dir(self, tmp_path):
        cfg = build_run_config({"output_dir": str(tmp_path / "run")})
        assert cfg.paths.checkpoint == str(tmp_path / "run" / "rresm.ckpt")

    def test_explicit_checkpoint_wins(self, tmp_path):
        cfg = build_run_config({"output_dir": str(tmp_path), "checkpoint": "a.ckpt"})
        assert cfg.paths.checkpoint == "a.ckpt"

    def test_environment_checkpoint_wins(self, monkeypatch, tmp_path):
        monkeypatch.setattr("src.models.run_config.CHECKPOINT_FILE", "env.ckpt")
        assert build_run_config({"output_dir": str(tmp_path)}).paths.checkpoint == "env.ckpt"
