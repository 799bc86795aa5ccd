import json

import pytest

from stereogate.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    cc = cfg.composite_config()
    assert cc.k_range == tuple(range(1, 21))
    assert cc.forest.n_trees == 100
    assert cfg.evaluate.k == 2 and cfg.evaluate.repeats == 100


def test_partial_override_and_paths(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({
        "seed": 7,
        "data": {"table": "d.csv", "schema": "/abs/s.json"},
        "forest": {"n_trees": 5},
        "gating": {"k_max": 4, "imine_components": 15, "nucleophile_components": 14},
    }))
    cfg = load_config(p)
    assert cfg.seed == 7
    assert cfg.data.table == str(tmp_path / "d.csv")
    assert cfg.data.schema == "/abs/s.json"
    cc = cfg.composite_config()
    assert cc.forest.n_trees == 5 and cc.forest.seed == 7
    assert (cc.imine_components, cc.nucleophile_components) == (15, 14)
    assert cc.k_range == (1, 2, 3, 4)
    assert cfg.forest.bootstrap is True


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"forest": {"n_tree": 5}},
    {"forest": {"n_trees": "5"}},
    {"forest": {"n_trees": 2.5}},
    {"forest": {"bootstrap": 1}},
    {"gating": {"k_min": 3, "k_max": 2}},
    {"evaluate": {"model": "svm"}},
    {"evaluate": {"roles": ["reagent"]}},
    {"gmm": {"reg": 0}},
    {"forest": 3},
])
def test_rejects(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_bad_json(tmp_path):
    p = tmp_path / "run.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


def test_to_dict_round_trip():
    cfg = parse_config({"seed": 3, "lasso": {"lam": 0.1}, "tree": {"max_depth": 4}})
    assert parse_config(json.loads(json.dumps(cfg.to_dict()))) == cfg
