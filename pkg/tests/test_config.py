import pytest

from open_ns.config import build_config, parse_overrides, parse_value
from open_ns.harness import ConfigError


def test_defaults_are_desk():
    cfg = build_config()
    assert cfg.n_episodes == 1000 and cfg.algo.open_p == 200


def test_file_then_overrides_then_seed(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('profile = "desk"\ndomains = ["NsMountainCar"]\nn_trials = 4\nbase_seed = 3\n'
                    "[algo]\nopen_p = 100\n[domain_params.NsMountainCar]\nc_v = 0.01\n")
    cfg = build_config(path, overrides=["n_trials=6", "algo.prowls_d=3"], seed=11)
    assert cfg.domains == ("NsMountainCar",) and cfg.n_trials == 6 and cfg.base_seed == 11
    assert cfg.algo.open_p == 100 and cfg.algo.prowls_d == 3
    assert cfg.domain_params == {"NsMountainCar": {"c_v": 0.01}}


def test_profile_argument_wins():
    assert build_config(profile="paper").n_episodes == 2000


@pytest.mark.parametrize("override", ["bogus=1", "algo.nope=2", "domain_params.RoboToyActive.alpha9=1",
                                      "domain_params.Atari.x=1", "n_trials", "algo=3"])
def test_unknown_keys_fail_before_work(override):
    with pytest.raises(ConfigError):
        build_config(overrides=[override])


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text("[algo]\nwindow = 5\n")
    with pytest.raises(ConfigError, match="algo.window"):
        build_config(path)


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError):
        build_config(overrides=["algo.open_p=600"])
    with pytest.raises(ConfigError):
        build_config(overrides=["domains=Atari"])
    with pytest.raises(ConfigError):
        build_config(profile="huge")


def test_value_parsing():
    assert parse_value("3") == 3 and parse_value("0.5") == 0.5
    assert parse_value("[0, 1]") == [0, 1] and parse_value("RoboToyActive") == "RoboToyActive"
    assert parse_overrides(["a.b = 2"]) == [("a.b", 2)]


def test_scalar_list_keys_are_promoted():
    cfg = build_config(overrides=["speeds=2", "domains=Medevac"])
    assert cfg.speeds == (2.0,) and cfg.domains == ("Medevac",)
