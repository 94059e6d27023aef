import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairobnc.correction import (
    BUDGET_EXHAUSTED, FLIP_CAP_REACHED, MARGIN_BELOW_THRESHOLD, RANKING_EXHAUSTED,
    FairObncParams, fair_obnc, fair_obnc_flips, flip_budget, obnc, prevalence_bounds,
)
from fairobnc.data import NoiseSpec, inject_noise
from fairobnc.ensemble import EnsembleParams, MarginRanking, fit, rank_noisy

from conftest import make_ds
from oracles import alg1_trace, brute_min_flips


def labels_with(n_pos, n):
    return [1] * n_pos + [0] * (n - n_pos)


# ------------------------------------------------------------------- bounds

@pytest.mark.parametrize("p, d, expected", [(0.1, 0.2, (0.08, 0.12)), (0.3, 0.0, (0.3, 0.3)), (0.6, 1.0, (0.0, 1.0))])
def test_prevalence_bounds(p, d, expected):
    lo, hi = prevalence_bounds(p, d)
    assert lo == pytest.approx(expected[0], abs=1e-15) and hi == pytest.approx(expected[1], abs=1e-15)


def test_bounds_reject_out_of_range():
    with pytest.raises(ValueError):
        prevalence_bounds(0.5, 1.5)


# ------------------------------------------------------------------- budget

def test_in_band_group_has_zero_budget():
    b = flip_budget(labels_with(2, 10) + labels_with(2, 10), ["A"] * 10 + ["B"] * 10, 0.0)
    assert b.budgets == {"A": 0, "B": 0}


def test_budget_signs_match_hand_values():
    # overall prevalence 20/200 = 0.1, D = 0.2: bounds (0.08, 0.12)
    y = labels_with(15, 100) + labels_with(5, 100)
    b = flip_budget(y, ["A"] * 100 + ["B"] * 100, 0.2)
    assert (b.lower, b.upper) == pytest.approx((0.08, 0.12))
    assert b.budgets == {"A": -3, "B": 3}
    assert brute_min_flips(15, 100, *_band(y, 0.2)) == -3
    assert brute_min_flips(5, 100, *_band(y, 0.2)) == 3


def _band(y, d):
    from oracles import band
    return band(y, d)


def test_budget_clamped_to_available():
    # single positive in A cannot reach a band that needs two demotions
    y = [1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0]
    b = flip_budget(y, ["A"] * 2 + ["B"] * 10, 0.0)
    assert b.budgets["A"] >= -2 and b.budgets["B"] <= 10


def test_budget_halves_round_away_from_zero():
    # 2 groups of 4; A has 0 positives, B has 2: p = 1/4, n_A * p = 1 exactly, target 0.5 -> 1 half case
    y = [0, 0, 0, 0, 1, 1, 0, 0]
    b = flip_budget(y, ["A"] * 4 + ["B"] * 4, 0.5)
    # band [1/8, 3/8]: A needs 4/8 = 0.5 -> 1 ; B needs 4*(3/8) - 2 = -0.5 -> -1
    assert b.budgets == {"A": 1, "B": -1}


@given(st.lists(st.tuples(st.integers(0, 1), st.sampled_from("AB")), min_size=2, max_size=12),
       st.sampled_from([0.0, 0.1, 0.25, 0.5]))
def test_budget_within_one_of_brute_force(rows, d):
    y = [r[0] for r in rows]
    g = [r[1] for r in rows]
    b = flip_budget(y, g, d)
    lo, hi = _band(y, d)
    for s in set(g):
        ys = [yy for yy, gg in zip(y, g) if gg == s]
        k = brute_min_flips(sum(ys), len(ys), lo, hi)
        assert abs(b.budgets[s] - k) <= 1
        assert b.budgets[s] * k >= 0  # same direction


# ---------------------------------------------------------------- Fair-OBNC

HAND_Y = [0, 0, 0, 1, 0, 0, 1, 1, 1, 1, 0, 0]
HAND_G = ["A"] * 6 + ["B"] * 6
HAND_ORDER = [3, 10, 0, 7, 5, 11, 1, 8]
HAND_MARGINS = [0.9, 0.8, 0.8, 0.6, 0.4, 0.4, 0.2, 0.2]


def _hand_ranking():
    return MarginRanking(np.array(HAND_ORDER), np.array(HAND_MARGINS), "vote")


def test_hand_trace_matches_straight_line_loop():
    ds = make_ds(HAND_Y, HAND_G)
    params = FairObncParams(max_flip_rate=1.0, disparity_target=0.2, margin_threshold=0.0)
    y, rep = fair_obnc(ds, params, ranking=_hand_ranking())
    ref_y, trace, reason, _ = alg1_trace(HAND_Y, HAND_G, [True] * 12, HAND_ORDER, HAND_MARGINS, 1.0, 0.2, 0.0)
    assert [(f.index, f.old, f.new) for f in rep.flipped] == trace
    assert y.tolist() == ref_y and rep.stop_reason == reason
    # P = 5/12, band [1/3, 1/2]; A has 1/6 -> +1 (round(1.0)), B has 4/6 -> -1
    assert rep.budget == {"A": 1, "B": -1}
    assert trace == [(0, 0, 1), (7, 1, 0)]
    assert reason == BUDGET_EXHAUSTED


def test_all_in_band_zero_flips():
    ds = make_ds([1, 0, 1, 0], ["A", "A", "B", "B"])
    r = MarginRanking(np.array([0, 2]), np.array([0.5, 0.5]), "vote")
    y, rep = fair_obnc(ds, FairObncParams(), ranking=r)
    assert rep.flips_performed == 0 and rep.stop_reason == BUDGET_EXHAUSTED
    assert y.tolist() == [1, 0, 1, 0]


def test_zero_cap_zero_flips():
    ds = make_ds(HAND_Y, HAND_G)
    _, rep = fair_obnc(ds, FairObncParams(max_flip_rate=0.0), ranking=_hand_ranking())
    assert rep.flips_performed == 0 and rep.stop_reason == FLIP_CAP_REACHED


def test_threshold_stops_loop():
    ds = make_ds(HAND_Y, HAND_G)
    _, rep = fair_obnc(ds, FairObncParams(max_flip_rate=1.0, disparity_target=0.0,
                                          margin_threshold=0.85), ranking=_hand_ranking())
    assert rep.flips_performed == 0 and rep.stop_reason == MARGIN_BELOW_THRESHOLD


def test_ranking_exhausted():
    ds = make_ds(HAND_Y, HAND_G)
    r = MarginRanking(np.array([3]), np.array([0.9]), "vote")
    _, rep = fair_obnc(ds, FairObncParams(max_flip_rate=1.0, disparity_target=0.0), ranking=r)
    assert rep.flips_performed == 0 and rep.stop_reason == RANKING_EXHAUSTED


def test_non_train_ranked_index_rejected():
    ds = make_ds([0, 1, 1, 0], ["A", "A", "B", "B"], split=["train", "train", "train", "test"])
    r = MarginRanking(np.array([3]), np.array([0.9]), "vote")
    with pytest.raises(ValueError):
        fair_obnc_flips(ds.labels, ds.group, ds.mask("train"), r, 1.0, 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        FairObncParams(max_flip_rate=1.5)
    with pytest.raises(ValueError):
        FairObncParams(margin_mode="soft")


def test_fair_obnc_end_to_end_reduces_disparity(small_ds):
    noisy = inject_noise(small_ds, NoiseSpec.for_target("label1", "A", 0.4, seed=2))
    params = FairObncParams(max_flip_rate=0.2, disparity_target=0.05,
                            ensemble=EnsembleParams(n_learners=21, max_depth=4, min_leaf=5, seed=1))
    y, rep = fair_obnc(noisy, params)
    train = noisy.mask("train")
    before = rep.prevalence_before
    after = rep.prevalence_after
    assert abs(after["A"] - after["B"]) < abs(before["A"] - before["B"])
    assert np.array_equal(y[~train], noisy.labels[~train])
    doc = json.loads(rep.to_json())
    assert doc["format"] == "fairobnc-report" and doc["flips_performed"] == len(doc["flips"])
    assert all(f["direction"] in ("0->1", "1->0") for f in doc["flips"])


@given(st.lists(st.tuples(st.integers(0, 1), st.sampled_from("AB"), st.booleans()), min_size=2, max_size=30),
       st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 0.6))
def test_flip_directions_and_cap(rows, seed, R, D, T):
    y = np.array([r[0] for r in rows])
    g = np.array([r[1] for r in rows])
    train = np.array([r[2] for r in rows])
    train[0] = True
    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(train)
    idx = idx[rng.random(len(idx)) < 0.7]
    ranking = MarginRanking.from_margins(idx, rng.integers(0, 6, len(idx)) / 5, "vote")
    out, flips, reason, budget = fair_obnc_flips(y, g, train, ranking, R, D, T)
    assert len(flips) <= int(np.floor(round(R * train.sum(), 9)))
    for f in flips:
        assert (f.new == 1) == (budget.budgets[f.group] > 0)
        assert f.margin >= T
    per_group = {s: sum(1 for f in flips if f.group == s) for s in budget.budgets}
    for s, n in per_group.items():
        assert n <= abs(budget.budgets[s])
    assert np.array_equal(out != y, np.isin(np.arange(len(y)), [f.index for f in flips]))


# --------------------------------------------------------------------- OBNC

def _noisy(small_ds):
    return inject_noise(small_ds, NoiseSpec.for_target("both", "A", 0.2, seed=9))


def test_obnc_zero_fraction(small_ds):
    ds = _noisy(small_ds)
    y, rep = obnc(ds, 0.0, EnsembleParams(n_learners=11, seed=0))
    assert np.array_equal(y, ds.labels) and rep.flips_performed == 0


def test_obnc_full_fraction_agrees_with_ensemble(small_ds):
    ds = _noisy(small_ds)
    params = EnsembleParams(n_learners=11, max_depth=3, min_leaf=5, seed=0)
    y, rep = obnc(ds, 1.0, params)
    ens = fit(ds, params)
    train = ds.mask("train")
    votes = ens.learner_votes(ds.features[train])
    pred = (2 * votes.sum(0) >= votes.shape[0]).astype(int)
    assert rep.flips_performed > 0
    assert np.array_equal(y[train], pred)


def test_obnc_prefix_contract():
    ds = make_ds([0] * 40, ["A", "B"] * 20)
    r = MarginRanking(np.arange(10), np.linspace(1.0, 0.1, 10), "vote")
    y, rep = obnc(ds, 0.1, ranking=r)  # floor(0.1 * 40) = 4
    assert [f.index for f in rep.flipped] == [0, 1, 2, 3]
    assert y[:4].tolist() == [1, 1, 1, 1] and y[4:].sum() == 0


def test_obnc_rejects_bad_fraction(small_ds):
    with pytest.raises(ValueError):
        obnc(small_ds, 1.5)
