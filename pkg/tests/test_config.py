"""Tests for run configuration parsing."""

import json
from pathlib import Path

import pytest
from pc2.config import (
    ConfigError,
    ConfigParser,
    RunConfig,
    parse_config,
    parse_variant,
    write_effective_config,
)
from pc2.sampling import SamplingStrategy
from pc2.solvers import SolverMethod

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def parser():
    return ConfigParser()


class TestParseDict:
    def test_minimal(self, parser):
        config = parser.parse_dict({"problem": "toy_beam"})
        assert config.method == ("KKT",)
        assert config.n_V is None
        assert config.timing_enabled

    def test_lists_and_scalars(self, parser):
        config = parser.parse_dict({"problem": "toy_beam", "method": "SULM", "n_V": [100, 200], "n_BC": 40})
        assert config.method == ("SULM",)
        assert config.n_V == (100, 200)
        assert config.n_BC == (40,)

    def test_unknown_key(self, parser):
        with pytest.raises(ConfigError, match="Unknown config keys: colour"):
            parser.parse_dict({"problem": "toy_beam", "colour": "red"})

    def test_bad_version(self, parser):
        with pytest.raises(ConfigError, match="config_version"):
            parser.parse_dict({"problem": "toy_beam", "config_version": 2})

    def test_missing_problem(self, parser):
        with pytest.raises(ConfigError, match="problem: required"):
            parser.parse_dict({"method": "KKT"})

    def test_unknown_problem(self, parser):
        with pytest.raises(ConfigError, match="unknown problem"):
            parser.parse_dict({"problem": "plate"})

    def test_unknown_method(self, parser):
        with pytest.raises(ConfigError, match="method: unknown solver 'FOO'"):
            parser.parse_dict({"problem": "toy_beam", "method": ["KKT", "FOO"]})

    @pytest.mark.parametrize("key, value", [
        ("n_V", -5),
        ("n_V", []),
        ("n_BC", [10, 2.5]),
        ("n_init", True),
    ])
    def test_bad_counts(self, parser, key, value):
        with pytest.raises(ConfigError, match=key):
            parser.parse_dict({"problem": "heat_dirichlet", key: value})

    @pytest.mark.parametrize("key, value", [
        ("p", -1),
        ("repeats", 0),
        ("seed", "7"),
        ("q", 1.5),
        ("timing", "cpu"),
        ("ic_mode", "both"),
        ("sampling", "sobol"),
        ("problem_options", [1]),
    ])
    def test_bad_values(self, parser, key, value):
        with pytest.raises(ConfigError, match=key):
            parser.parse_dict({"problem": "toy_beam", key: value})

    def test_bad_adaptivity(self, parser):
        with pytest.raises(ConfigError, match="adaptivity"):
            parser.parse_dict({"problem": "toy_beam", "adaptivity": {"p_min": 6, "p_max": 2}})
        with pytest.raises(ConfigError, match="adaptivity"):
            parser.parse_dict({"problem": "toy_beam", "adaptivity": {"p_lowest": 2}})

    def test_not_an_object(self, parser):
        with pytest.raises(ConfigError):
            parser.parse_dict(["toy_beam"])


class TestParseText:
    def test_invalid_json(self, parser):
        with pytest.raises(ConfigError, match="line 1"):
            parser.parse_string("{problem: toy_beam}")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            parse_config(tmp_path / "absent.json")

    def test_fixture_file(self):
        config = parse_config(FIXTURES / "sweep.json")
        assert config.problem == "toy_beam"
        assert [v.label for v in config.variants] == ["KKT", "SULM", "KKT-D", "SULM-D"]


class TestVariants:
    @pytest.mark.parametrize("label, method, strategy", [
        ("kkt", SolverMethod.KKT, SamplingStrategy.RANDOM),
        ("SULM-D", SolverMethod.SULM, SamplingStrategy.DOPTIMAL),
        (" ols ", SolverMethod.OLS, SamplingStrategy.RANDOM),
    ])
    def test_parse_variant(self, label, method, strategy):
        variant = parse_variant(label)
        assert variant.method is method
        assert variant.strategy is strategy

    def test_global_sampling(self):
        assert parse_variant("KKT", "doptimal").label == "KKT-D"


class TestResolve:
    def test_defaults_from_problem(self):
        config = RunConfig(problem="toy_beam").resolve()
        assert config.p == 6
        assert config.n_V == (200,)
        assert config.n_BC == (40,)
        assert config.n_init == (0,)

    def test_explicit_values_kept(self):
        config = RunConfig(problem="toy_beam", p=4, n_V=(50,)).resolve()
        assert config.p == 4
        assert config.n_V == (50,)

    def test_effective_config_is_sorted_json(self, tmp_path):
        config = RunConfig(problem="toy_beam", seed=3).resolve()
        path = write_effective_config(config, tmp_path / "run")
        data = json.loads(path.read_text())
        assert list(data) == sorted(data)
        assert data["n_V"] == [200]
        assert data["seed"] == 3
