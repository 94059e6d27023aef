import json

import numpy as np
import pandas as pd
import pytest

from fairobnc import bench
from fairobnc.bench import ExperimentConfig, aggregate, run, run_trials, sample_hyperparameters
from fairobnc.errors import ConfigError

SMALL = {"n_learners": 7, "max_depth": 3, "min_leaf": 5}


def config(methods, rates=(0.05,), n_trials=2, seed=0, **kw):
    doc = {
        "dataset": {"synthetic": {"n_rows": 1500, "n_features": 3, "base_prevalence": 0.2,
                                  "class_separation": 2.0, "seed": 1}},
        "scenarios": [{"noise_target": "label0", "noisy_group": "A", "rates": list(rates)}],
        "methods": methods,
        "n_trials": n_trials,
        "seed": seed,
        "top_fraction": 0.2,
        "downstream": dict(SMALL),
    }
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def m(name, **space):
    return {"method": name, "space": {**SMALL, **space}}


# ---------------------------------------------------------- hyperparameters

def test_fixed_value_every_trial():
    for t in range(20):
        assert sample_hyperparameters({"k": 0.3}, 0, "obnc", t) == {"k": 0.3}


def test_integer_range_audit():
    draws = [sample_hyperparameters({"n": {"low": 1, "high": 51}}, 0, "x", t)["n"] for t in range(1000)]
    assert min(draws) == 1 and max(draws) == 51 and all(isinstance(d, int) for d in draws)


def test_same_coordinates_same_draw():
    space = bench.DEFAULT_SPACES["fair_obnc"]
    assert sample_hyperparameters(space, 4, "fair_obnc", 3) == sample_hyperparameters(space, 4, "fair_obnc", 3)
    assert sample_hyperparameters(space, 4, "fair_obnc", 3) != sample_hyperparameters(space, 4, "fair_obnc", 4)


def test_choice_step_and_log():
    hp = sample_hyperparameters({"c": ["a", "b"], "s": {"low": 11, "high": 21, "step": 2},
                                 "l": {"low": 1e-3, "high": 1.0, "log": True}}, 0, "t")
    assert hp["c"] in ("a", "b") and hp["s"] % 2 == 1 and 1e-3 <= hp["l"] <= 1.0


@pytest.mark.parametrize("space", [{"x": []}, {"x": {"low": 1}}, {"x": {"low": 3, "high": 1}}])
def test_bad_spaces(space):
    with pytest.raises(ConfigError):
        sample_hyperparameters(space, 0)


# ------------------------------------------------------------------ config

def test_config_validation():
    with pytest.raises(ConfigError):
        config([])
    with pytest.raises(ConfigError):
        config(["bogus"])
    with pytest.raises(ConfigError):
        config(["none"], surplus=1)
    with pytest.raises(ConfigError):
        config(["none", "none"])
    with pytest.raises(ConfigError):
        config(["none"], scenarios=[{"noise_target": "label2", "noisy_group": "A"}])


def test_exclude_sensitive_defaults():
    cfg = config(["none", "obnc", "fair_obnc"])
    assert [s.exclude_sensitive for s in cfg.methods] == [False, False, True]


def test_unknown_scenario_group():
    cfg = config(["none"], scenarios=[{"noise_target": "label0", "noisy_group": "Z", "rates": [0.1]}])
    with pytest.raises(ConfigError):
        run_trials(cfg)


# -------------------------------------------------------------------- runs

def test_counting_contract():
    recs = run_trials(config([m("obnc")], rates=[0.05], n_trials=2))
    assert len(recs) == 2 and (recs["status"] == "ok").all()
    assert len(aggregate(recs)) == 1


def test_none_at_rate_zero_is_clean():
    recs = run_trials(config(["none"], rates=[0.0], n_trials=2))
    assert (recs["reconstruction_score"] == 1.0).all() and (recs["n_flips"] == 0).all()


def test_non_editing_methods_have_no_reconstruction():
    recs = run_trials(config([m("data_repairer")], n_trials=1))
    assert recs["reconstruction_score"].isna().all() and recs["tpr"].notna().all()


def test_fair_obnc_never_sees_group_columns():
    recs = run_trials(config([m("fair_obnc")], n_trials=1))
    assert recs.loc[0, "status"] == "ok"


def test_failed_trial_becomes_record():
    # threshold 0 removes every feature with any group correlation, i.e. all of them
    recs = run_trials(config([m("suppress_correlation", threshold=0.0)], n_trials=2))
    assert (recs["status"] == "failed").all()
    assert recs["error"].str.startswith("EmptyFeatureSetError").all()
    summary = aggregate(recs)
    assert summary.loc[0, "n_trials"] == 0 and summary.loc[0, "n_failed"] == 2


def test_aggregate_arithmetic():
    recs = pd.DataFrame({"method": ["x", "x", "x"], "noise_target": ["label0"] * 3, "noisy_group": ["A"] * 3,
                         "rate": [0.1] * 3, "trial": [0, 1, 2], "status": ["ok", "ok", "failed"],
                         "error": ["", "", "boom"], "tpr": [0.4, 0.6, np.nan]})
    s = aggregate(recs)
    assert s.loc[0, "tpr"] == 0.5 and s.loc[0, "n_trials"] == 2 and s.loc[0, "n_failed"] == 1
    assert aggregate(recs.iloc[:1]).loc[0, "tpr"] == 0.4


def test_run_writes_outputs(tmp_path):
    paths = run(config([m("obnc"), m("fair_obnc")], rates=[0.1], n_trials=2), out_dir=tmp_path)
    assert set(paths) == {"trials", "summary", "plot_data", "table"}
    trials = bench.read_trials(paths["trials"])
    assert len(trials) == 4
    hp = json.loads(trials.loc[0, "hyperparameters"])
    assert "k_fraction" in hp or "max_flip_rate" in hp
    assert "fair_obnc" in paths["table"].read_text()


def test_parallel_matches_serial():
    cfg = config([m("obnc")], rates=[0.05, 0.1], n_trials=2)
    pd.testing.assert_frame_equal(run_trials(cfg, jobs=1), run_trials(cfg, jobs=2))


def test_resample_noise_toggle():
    a = run_trials(config(["none"], n_trials=2, resample_noise_per_trial=False))
    assert a.loc[0, "n_flips"] == a.loc[1, "n_flips"]
