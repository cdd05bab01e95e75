import json
import math

import numpy as np
import pytest

from periodic_oseledets.config import EXPERIMENT_DEFAULTS, load_config, parse_config, parse_override
from periodic_oseledets.errors import ConfigError
from periodic_oseledets.linear_core import CoordinateSeries, LocallyConstant
from periodic_oseledets.serialize import NEG_INF_TEXT, decode_float, dumps, encode, matrix_from_json

BASE = """
[subshift]
alphabet = 2
[generator]
kind = "constant"
matrix = [[1.0, 2.0], [0.0, 1.0]]
"""


def test_defaults_and_no_measure():
    cfg = parse_config(BASE, source="inline")
    assert cfg.experiment == {**EXPERIMENT_DEFAULTS, "epsilons": [0.5, 1 / 3, 0.25, 0.2]}
    assert cfg.output == {"directory": ".", "prefix": "", "formats": ["json", "csv"]}
    assert cfg.measure is None and cfg.source == "inline"
    with pytest.raises(ConfigError, match=r"missing \[measure\]"):
        cfg.experiment_config()


def test_overrides_apply_in_order():
    cfg = parse_config(BASE, ["experiment.seed=3", "experiment.seed=4", "output.prefix=abc"])
    assert cfg.experiment["seed"] == 4 and cfg.output["prefix"] == "abc"
    assert cfg.overrides == ["experiment.seed=3", "experiment.seed=4", "output.prefix=abc"]
    assert parse_override("experiment.epsilons=[0.5, 0.25]") == ("experiment", "epsilons", [0.5, 0.25])
    assert parse_override("output.prefix=bare word") == ("output", "prefix", "bare word")
    for bad in ("seed", "a.b.c=1", ".x=1"):
        with pytest.raises(ConfigError):
            parse_override(bad)


@pytest.mark.parametrize(
    "extra, needle",
    [
        ("[extra]\n", "unknown section [extra]"),
        ("[experiment]\nsamples = 1.5\n", "experiment.samples must be an integer"),
        ("[experiment]\nn_min = 9\nn_max = 3\n", "n_min must not exceed"),
        ("[experiment]\nintersect_tol = 0\n", "intersect_tol must be positive"),
        ("[experiment]\nepsilons = []\n", "epsilons must be a nonempty list"),
        ("[output]\nformats = [\"xml\"]\n", "output.formats"),
        ("[measure]\ntype = \"uniform\"\n", "measure.type"),
        ("[measure]\ntype = \"bernoulli\"\nprobabilities = [0.7, 0.7]\n", "sum"),
    ],
)
def test_rejections(extra, needle):
    with pytest.raises(ConfigError, match=needle.replace("[", r"\[").replace("]", r"\]")):
        parse_config(BASE + extra)


def test_generator_kinds():
    table = """
[subshift]
alphabet = 2
[generator]
kind = "locally_constant"
depth = 2
[generator.matrices]
"00" = [[1.0, 0.0], [0.0, 1.0]]
"01" = [[2.0, 0.0], [0.0, 1.0]]
"10" = [[3.0, 0.0], [0.0, 1.0]]
"11" = [[4.0, 0.0], [0.0, 1.0]]
"""
    cfg = parse_config(table)
    assert isinstance(cfg.gen, LocallyConstant) and cfg.gen.dimension == 2 and cfg.gen.reach == 1
    with pytest.raises(ConfigError, match="generator.matrices.11"):
        parse_config(table.replace('"11" = [[4.0, 0.0], [0.0, 1.0]]', '"11" = [[4.0]]'))
    series = """
[subshift]
alphabet = 2
[generator]
kind = "coordinate_series"
base = [[[2.0, 0.0], [0.0, 0.5]], [[1.0, 0.5], [0.0, 1.0]]]
perturbation = [[[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
alpha = 1.0
radius = 6
"""
    assert isinstance(parse_config(series).gen, CoordinateSeries)
    with pytest.raises(ConfigError, match="unknown key generator.matrix"):
        parse_config(series + "matrix = [[1.0]]\n")
    with pytest.raises(ConfigError, match="generator.alpha is required"):
        parse_config(series.replace("alpha = 1.0\n", ""))


def test_subshift_validation():
    for body, needle in [
        ("alphabet = 0", "positive integer"),
        ("alphabet = 2\ntransitions = [[1, 2], [1, 1]]", "0 or 1"),
        ("alphabet = 2\ntransitions = [[1, 1]]", "2x2"),
        ("alphabet = 2\ntransitions = [[1, 1], [0, 0]]", "no successor"),
    ]:
        with pytest.raises(ConfigError, match=needle):
            parse_config(BASE.replace("alphabet = 2", body))


def test_markov_measure_and_bernoulli_on_sft():
    text = BASE.replace("alphabet = 2", "alphabet = 2\ntransitions = [[1, 1], [1, 0]]")
    cfg = parse_config(text + "[measure]\ntype = \"markov\"\nstochastic = [[0.5, 0.5], [1.0, 0.0]]\n")
    assert cfg.measure is not None
    with pytest.raises(ConfigError, match="full shift"):
        parse_config(text + "[measure]\ntype = \"bernoulli\"\nprobabilities = [0.5, 0.5]\n")
    with pytest.raises(ConfigError, match="measure.stochastic"):
        parse_config(text + "[measure]\ntype = \"markov\"\nstochastic = [[0.5, 0.5], [0.5, 0.5]]\n")


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "none.toml")


def test_experiment_config_fields():
    cfg = parse_config(BASE + "[measure]\ntype = \"bernoulli\"\nprobabilities = [0.25, 0.75]\n[experiment]\nseed = 9\n")
    ec = cfg.experiment_config(workers=3)
    assert ec.seed == 9 and ec.workers == 3 and ec.horizon == 1024 and ec.epsilons == (0.5, 1 / 3, 0.25, 0.2)


# serialization


def test_neg_inf_round_trip():
    text = dumps({"a": [-math.inf, 1.5, np.float64(0.1)], "b": np.arange(3), "c": np.bool_(True)})
    assert json.loads(text) == {"a": [NEG_INF_TEXT, 1.5, 0.1], "b": [0, 1, 2], "c": True}
    assert decode_float(NEG_INF_TEXT) == -math.inf and decode_float(2) == 2.0
    assert encode((1, 2.0)) == [1, 2.0]


def test_float_repr_exact():
    x = [0.1 + 0.2, math.pi / 7, 5e-324, -1.7976931348623157e308]
    assert json.loads(dumps(x)) == x


def test_matrix_from_json():
    m = matrix_from_json([["-inf", 1], [2.5, 0]])
    assert m[0, 0] == -math.inf and m.shape == (2, 2)
    assert matrix_from_json([[], []]).shape == (2, 0)
