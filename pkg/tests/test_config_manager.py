from pathlib import Path

import pytest

from config_manager import ConfigError, ConfigManager, RunConfig, flatten
from formulation_data import BUNDLED_APIS, BUNDLED_FORMULATIONS


def write_config(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text)
    return ConfigManager(str(path))


class TestFlatten:

    def test_lifts_tables(self):
        assert flatten({"seed": 1, "network": {"preset": "dnn"}, "split": {"n_test": 5}}) == {
            "seed": 1, "preset": "dnn", "n_test": 5,
        }


class TestLoadConfig:

    def test_missing_file_gives_defaults(self, tmp_path):
        config = ConfigManager(str(tmp_path / "absent.toml")).load_config()
        assert config.seed == 0
        assert config.split.n_validation == 20
        assert config.network.preset == "ann"
        assert config.paths.formulations == BUNDLED_FORMULATIONS
        assert config.paths.split_file == tmp_path / "split.txt"

    def test_missing_required_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            ConfigManager(str(tmp_path / "absent.toml")).load_config(required=True)

    def test_tables_and_relative_paths(self, tmp_path):
        manager = write_config(tmp_path, (
            'seed = 3\nmodel_file = "runs/m.odtnet"\n'
            '[split]\nstrategy = "MaxiMin"\nn_test = 10\n'
            '[network]\npreset = "dnn"\nhidden_layers = [8, 4]\nepochs = 50\n'
        ))
        config = manager.load_config()
        assert config.seed == 3
        assert config.paths.model_file == tmp_path / "runs" / "m.odtnet"
        assert config.split.strategy == "maximin"
        assert config.split.n_test == 10
        assert config.network.hidden_layers == (8, 4)
        assert config.network.epochs == 50

    def test_absolute_paths_kept(self, tmp_path):
        target = tmp_path / "elsewhere" / "apis.csv"
        manager = write_config(tmp_path, f'apis = "{target.as_posix()}"\n')
        assert manager.load_config().paths.apis == target

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="Invalid TOML"):
            write_config(tmp_path, "seed = \n").load_config()

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="colour"):
            write_config(tmp_path, 'colour = "blue"\n').load_config()

    def test_non_integer_count(self, tmp_path):
        with pytest.raises(ConfigError, match="n_validation"):
            write_config(tmp_path, "n_validation = 2.5\n").load_config()

    def test_bundled_config_file(self):
        config = ConfigManager(str(Path(__file__).parent.parent / "config.toml")).load_config(required=True)
        assert config.paths.formulations == BUNDLED_FORMULATIONS.resolve()
        assert config.paths.apis == BUNDLED_APIS.resolve()
        assert config.network.log_every == 500


class TestOverrides:

    def test_none_values_are_skipped(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "absent.toml"))
        config = manager.apply_overrides(RunConfig(), {"seed": None, "epochs": 7, "learning_rate": "0.5"})
        assert config.seed == 0
        assert config.network.epochs == 7
        assert config.network.learning_rate == 0.5

    def test_hidden_layers_from_text(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "absent.toml"))
        assert manager.apply_overrides(RunConfig(), {"hidden_layers": "16, 8"}).network.hidden_layers == (16, 8)

    def test_original_untouched(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "absent.toml"))
        base = RunConfig()
        manager.apply_overrides(base, {"n_test": 5})
        assert base.split.n_test == 20

    def test_unknown_override(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager(str(tmp_path / "absent.toml")).apply_overrides(RunConfig(), {"batch_size": 8})


class TestValidateConfig:

    @pytest.fixture
    def manager(self, tmp_path):
        return ConfigManager(str(tmp_path / "absent.toml"))

    def test_defaults_pass(self, manager):
        manager.validate_config(manager.load_config())

    @pytest.mark.parametrize("key,value,message", [
        ("strategy", "kmeans", "strategy"),
        ("preset", "cnn", "preset"),
        ("log_level", "chatty", "log level"),
    ])
    def test_rejected_values(self, manager, key, value, message):
        config = manager.apply_overrides(manager.load_config(), {key: value})
        with pytest.raises(ConfigError, match=message):
            manager.validate_config(config)

    def test_seed_required(self, manager):
        config = manager.load_config()
        config.seed = None
        with pytest.raises(ConfigError, match="seed"):
            manager.validate_config(config)

    def test_missing_input_file(self, manager, tmp_path):
        config = manager.apply_overrides(manager.load_config(), {"formulations": str(tmp_path / "nope.csv")})
        with pytest.raises(ConfigError, match="formulations"):
            manager.validate_config(config)
        manager.validate_config(config, need_inputs=False)

    def test_missing_test_indices(self, manager, tmp_path):
        config = manager.apply_overrides(manager.load_config(), {"test_indices": "rows.txt"})
        with pytest.raises(ConfigError, match="Test index"):
            manager.validate_config(config)
