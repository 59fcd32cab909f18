from pathlib import Path

import pytest

from artistbias.bias import ItemCategory, SamplingDesign
from artistbias.config import ConfigError, build_config, read_config_file, with_models_seeded
from artistbias.recsys import Algorithm, Similarity


def test_read_and_build(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text(
        "# experiment 2\n"
        "dataset = synthetic\n"
        "experiment = extreme   # inline comment\n"
        "algorithms = NMF, userknnavg\n"
        "similarity = MSD\n"
        "extreme_category = female\n"
        "sample_fraction = 1\n"
        "synth.n_male_users = 100\n"
        "seed = 42\n"
    )
    cfg = build_config(read_config_file(cfg_file))
    assert cfg.sampling.design is SamplingDesign.EXTREME_PREFERENCE
    assert cfg.sampling.extreme_category is ItemCategory.FEMALE_ARTISTS
    assert [m.algorithm for m in cfg.models] == [Algorithm.NMF, Algorithm.USER_KNN_AVG]
    assert cfg.models[1].similarity is Similarity.MSD
    assert cfg.synth.n_male_users == 100
    assert cfg.experiment == "extreme" and cfg.seed == 42


def test_defaults():
    cfg = build_config({})
    assert len(cfg.models) == 4
    assert cfg.folds.n_folds == 3 and cfg.folds.held_out == 10 and cfg.folds.list_size == 5
    assert cfg.filter_policy.min_unique_artists_per_user == 10
    assert cfg.candidates == "testset" and cfg.svg


def test_seeds_derive_from_master():
    a, b = build_config({"seed": "1"}), build_config({"seed": "2"})
    assert a.folds.seed != b.folds.seed and a.sampling.seed != b.sampling.seed
    assert build_config({"seed": "1"}) == a
    s0 = [m.seed for m in with_models_seeded(a, 0)]
    s1 = [m.seed for m in with_models_seeded(a, 1)]
    assert s0 != s1 and len(set(s0)) == len(s0)


@pytest.mark.parametrize("values", [
    {"bogus": "1"},
    {"dataset": "spotify"},
    {"candidates": "all"},
    {"held_out": "x"},
    {"algorithms": "SVD"},
    {"svg": "maybe"},
    {"held_out": "30"},
])
def test_invalid_values(values):
    with pytest.raises(ConfigError):
        build_config(values)


def test_real_dataset_needs_paths(tmp_path):
    with pytest.raises(ConfigError):
        build_config({"dataset": "lfm360k"})
    cfg = build_config({"dataset": "lfm360k", "events": "e", "profiles": "p", "gender_map": "g"})
    assert cfg.events == Path("e")
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.validate(check_paths=True)


def test_malformed_line(tmp_path):
    (tmp_path / "c").write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "c")
