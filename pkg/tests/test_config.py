import pytest
from pydantic import ValidationError

from config import ApplicationSettings, EnvironmentSettings, LocalSpectralSettings, RunConfig
from utils import load_key_value_file, load_yaml


def test_defaults_come_from_yaml():
    settings = ApplicationSettings.from_cfg()
    assert settings.flow.trials == 200
    assert settings.local_spectral.alphas == [0.01, 0.05, 0.1, 0.2, 0.5]
    assert settings.local_spectral.target_volumes is None
    assert settings.ncp.exact_oracle_limit == 18


def test_partial_dict_keeps_other_defaults():
    settings = ApplicationSettings.from_cfg({"flow": {"trials": 5}})
    assert settings.flow.trials == 5
    assert settings.flow.tolerance == 0.02
    assert settings.bounds.rank_cap == 32


def test_invalid_alpha_is_rejected():
    with pytest.raises(ValidationError):
        LocalSpectralSettings(alphas=[0.1, 1.5])
    with pytest.raises(ValidationError):
        LocalSpectralSettings(alphas=[])
    with pytest.raises(ValidationError):
        LocalSpectralSettings(target_volumes=[0])


def test_run_file_and_overrides(tmp_path):
    run_file = tmp_path / "run.conf"
    run_file.write_text(
        "# karate run\ngraph = karate\nkeep-lcc = true\nmethods = mqi, dendrogram\nsamples = 7\nseed = 1\n",
        encoding="utf-8",
    )
    config = RunConfig.from_sources(run_file, {"seed": 3, "methods": None})
    assert config.graph == "karate"
    assert config.keep_lcc is True
    assert config.methods == ["mqi", "dendrogram"]
    assert config.seed == 3
    assert config.settings.flow.trials == 7
    assert config.settings.local_spectral.seed_sample_size == 7


def test_yaml_run_file(tmp_path):
    run_file = tmp_path / "run.yml"
    run_file.write_text("graph: toy.txt\nscores: [Conductance, Modularity]\nexact: true\n", encoding="utf-8")
    config = RunConfig.from_sources(run_file)
    assert config.scores == ["Conductance", "Modularity"]
    assert config.exact
    assert config.bias


def test_unknown_method_is_rejected():
    with pytest.raises(ValidationError):
        RunConfig(graph="karate", methods="local-spectral,walktrap")


def test_samples_do_not_leak_into_shared_settings():
    shared = ApplicationSettings()
    RunConfig(graph="karate", samples=3, settings=shared)
    assert shared.flow.trials == 200


def test_missing_files():
    with pytest.raises(FileNotFoundError):
        load_yaml("no/such/settings.yml")
    with pytest.raises(FileNotFoundError):
        load_key_value_file("no/such/run.conf")


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("NCP_WORKERS", "4")
    assert EnvironmentSettings.load().NCP_WORKERS == 4
    monkeypatch.setenv("NCP_WORKERS", "0")
    with pytest.raises(ValidationError):
        EnvironmentSettings.load()
