import importlib
import os
import sys

import pytest

import src.utils.config as config_module
from src.utils.config import (
    SEED_ENV_VAR,
    check_and_setup_main_config,
    initialize_configurations,
    load_component_specific_config,
    load_config,
    merge_component_configs,
    resolve_seed,
)

TEMPLATE_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config-template.toml")


class TestMainConfig:
    def test_template_parses(self):
        config = load_config(TEMPLATE_CONFIG)
        assert config["general"]["seed"] == 0
        assert config["montecarlo"]["chunk_size"] > 0
        assert config["training"]["optimizer"] == "adam"
        assert config["analysis"]["classification_tol"] == 0.02

    def test_copies_template_once(self, tmp_path):
        (tmp_path / "config-template.toml").write_text('[general]\nseed = 5\n', encoding="utf-8")
        assert check_and_setup_main_config(base_dir=str(tmp_path)) is True
        assert (tmp_path / "config.toml").exists()
        assert check_and_setup_main_config(base_dir=str(tmp_path)) is False

    def test_initialize_without_files_gives_empty_config(self, tmp_path):
        assert initialize_configurations(base_dir=str(tmp_path)) == ({}, False)

    def test_initialize_from_template(self, tmp_path):
        (tmp_path / "config-template.toml").write_text('[general]\nseed = 5\n', encoding="utf-8")
        config, copied = initialize_configurations(base_dir=str(tmp_path))
        assert copied and config["general"]["seed"] == 5

    def test_explicit_path_wins(self, tmp_path):
        other = tmp_path / "other.toml"
        other.write_text('[general]\nseed = 9\n', encoding="utf-8")
        config, copied = initialize_configurations(base_dir=str(tmp_path), config_path=str(other))
        assert config["general"]["seed"] == 9
        assert not copied
        assert not (tmp_path / "config.toml").exists()

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(str(tmp_path / "nope.toml"))


class TestComponentConfig:
    def test_prefers_config_over_template_and_uses_named_section(self, tmp_path):
        (tmp_path / "config-template.toml").write_text("[demo]\nruns = 1\n", encoding="utf-8")
        (tmp_path / "config.toml").write_text("[demo]\nruns = 2\ndepth = 4\n", encoding="utf-8")
        assert load_component_specific_config(str(tmp_path), "demo") == {"runs": 2, "depth": 4}

    def test_whole_file_without_named_section(self, tmp_path):
        (tmp_path / "config-template.toml").write_text("runs = 3\n", encoding="utf-8")
        assert load_component_specific_config(str(tmp_path), "demo") == {"runs": 3}

    def test_missing_and_broken_files_give_empty_config(self, tmp_path):
        assert load_component_specific_config(str(tmp_path), "demo") == {}
        (tmp_path / "config.toml").write_text("runs = [", encoding="utf-8")
        assert load_component_specific_config(str(tmp_path), "demo") == {}

    def test_root_overrides_win(self):
        merged = merge_component_configs({"runs": 1, "depth": 4}, {"runs": 9}, "demo")
        assert merged == {"runs": 9, "depth": 4}


class TestSeed:
    def test_precedence(self, monkeypatch):
        config = {"general": {"seed": 3}}
        assert resolve_seed({}) == 0
        assert resolve_seed(config) == 3
        monkeypatch.setenv(SEED_ENV_VAR, "12")
        assert resolve_seed(config) == 12
        assert resolve_seed(config, cli_seed=-4) == -4

    def test_bad_env_value(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "abc")
        with pytest.raises(ValueError):
            resolve_seed({})


class TestTomlBackend:
    @pytest.fixture
    def without_tomllib(self, monkeypatch):
        """模拟 Python 3.10：标准库里没有 tomllib"""
        pytest.importorskip("tomli")
        with monkeypatch.context() as mp:
            mp.setitem(sys.modules, "tomllib", None)
            yield importlib.reload(config_module)
        importlib.reload(config_module)

    def test_falls_back_to_tomli(self, without_tomllib):
        assert without_tomllib.tomllib.__name__ == "tomli"
        config = without_tomllib.load_config(TEMPLATE_CONFIG)
        assert config["training"]["optimizer"] == "adam"

    def test_decode_error_with_tomli(self, without_tomllib, tmp_path):
        broken = tmp_path / "broken.toml"
        broken.write_text("[general\nseed = ", encoding="utf-8")
        with pytest.raises(without_tomllib.tomllib.TOMLDecodeError):
            without_tomllib.load_config(str(broken))

    def test_component_config_with_tomli(self, without_tomllib, tmp_path):
        (tmp_path / "config-template.toml").write_text("[demo]\nruns = 2\n", encoding="utf-8")
        assert without_tomllib.load_component_specific_config(str(tmp_path), "demo") == {"runs": 2}
