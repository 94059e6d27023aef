import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairobnc.data import (
    CsvSchema, Dataset, NoiseSpec, SyntheticSpec, add_group_features, audit_iid,
    generate_synthetic, group_feature_names, inject_noise, load_csv, make_iid, save_csv,
)
from fairobnc.ensemble import EnsembleParams, fit, predict_scores
from fairobnc.errors import CsvParseError, DataError, DomainError, SchemaError
from fairobnc.metrics import roc_auc

from conftest import make_ds


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------ loading

def test_load_four_rows(tmp_path):
    p = write(tmp_path, "f1,f2,label,group\n1,2,0,A\n3,4,1,B\n5,6,1,A\n7,8,0,B\n")
    ds = load_csv(p)
    assert (ds.n_rows, ds.n_features) == (4, 2)
    assert ds.feature_names == ("f1", "f2")
    assert ds.labels.tolist() == [0, 1, 1, 0]
    assert ds.group.tolist() == ["A", "B", "A", "B"]


def test_label_outside_domain_names_row(tmp_path):
    p = write(tmp_path, "f1,label,group\n1,0,A\n2,2,B\n")
    with pytest.raises(DomainError, match="row 2"):
        load_csv(p)


def test_missing_split_means_train(tmp_path):
    p = write(tmp_path, "f1,label,group\n1,0,A\n2,1,B\n")
    assert load_csv(p).split.tolist() == ["train", "train"]


def test_required_split_missing(tmp_path):
    p = write(tmp_path, "f1,label,group\n1,0,A\n")
    with pytest.raises(SchemaError):
        load_csv(p, CsvSchema(required_split=True))


def test_missing_label_column(tmp_path):
    with pytest.raises(SchemaError, match="label"):
        load_csv(write(tmp_path, "f1,group\n1,A\n"))


def test_non_numeric_feature_reports_cell(tmp_path):
    p = write(tmp_path, "f1,label,group\n1,0,A\nabc,1,B\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(p)
    assert info.value.row == 2 and info.value.column == "f1"


def test_ragged_row(tmp_path):
    with pytest.raises(CsvParseError, match="row 1"):
        load_csv(write(tmp_path, "f1,label,group\n1,0\n"))


def test_unknown_split_value(tmp_path):
    with pytest.raises(DomainError, match="split"):
        load_csv(write(tmp_path, "f1,label,group,split\n1,0,A,dev\n"))


def test_custom_schema_columns(tmp_path):
    p = write(tmp_path, "x,y,s\n1.5,1,g1\n2.5,0,g2\n")
    ds = load_csv(p, CsvSchema(label="y", group="s"))
    assert ds.feature_names == ("x",) and ds.labels.tolist() == [1, 0]


def test_csv_round_trip_is_exact(tmp_path, small_ds):
    noisy = inject_noise(small_ds, NoiseSpec.for_target("label0", "A", 0.3, seed=1))
    path = tmp_path / "rt.csv"
    save_csv(noisy, path)
    back = load_csv(path)
    assert np.array_equal(back.features, noisy.features)
    for attr in ("labels", "group", "split", "clean_labels"):
        assert np.array_equal(getattr(back, attr), getattr(noisy, attr))
    assert back.feature_names == noisy.feature_names


def test_dataset_validation():
    with pytest.raises(DataError):
        make_ds([0, 1], ["A"])
    with pytest.raises(DomainError):
        make_ds([0, 1], ["A", "B"], split=["train", "holdout"])
    with pytest.raises(DataError):
        make_ds([0, 1], ["A", "B"], features=np.array([[0.0], [np.nan]]))


def test_take_and_drop():
    ds = make_ds([0, 1, 1], ["A", "B", "A"], features=np.arange(6.0).reshape(3, 2))
    sub = ds.take([2, 2, 0])
    assert sub.labels.tolist() == [1, 1, 0]
    assert ds.drop_features(["x0"]).feature_names == ("x1",)


# ---------------------------------------------------------------- synthetic

def test_synthetic_determinism():
    spec = SyntheticSpec(n_rows=1000, base_prevalence=0.1, seed=7)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.group, b.group) and np.array_equal(a.split, b.split)


def test_zero_separation_is_unlearnable():
    aucs = []
    for seed in range(10):
        ds = generate_synthetic(SyntheticSpec(n_rows=2000, class_separation=0.0,
                                              base_prevalence=0.3, seed=seed))
        ens = fit(ds, EnsembleParams(n_learners=25, max_depth=4, min_leaf=10, seed=seed))
        aucs.append(roc_auc(ds.labels[ds.mask("test")], predict_scores(ens, ds, "test")))
    assert abs(np.mean(aucs) - 0.5) <= 0.05


def test_group_counts_binomial():
    for seed in range(5):
        ds = generate_synthetic(SyntheticSpec(n_rows=10000, seed=seed))
        assert abs((ds.group == "A").sum() - 5000) <= 3 * np.sqrt(10000 * 0.25)


def test_split_counts_exact():
    ds = generate_synthetic(SyntheticSpec(n_rows=1001, split_fractions={"train": 0.5, "test": 0.5}))
    counts = {s: int(ds.mask(s).sum()) for s in ("train", "validation", "test")}
    assert counts == {"train": 501, "validation": 0, "test": 500}


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(base_prevalence=0.0)
    with pytest.raises(ValueError):
        SyntheticSpec(group_fractions={"A": 0.7, "B": 0.7})


def test_group_features():
    ds = add_group_features(make_ds([0, 1, 0], ["B", "A", "B"]))
    assert group_feature_names(ds) == ["group=A", "group=B"]
    assert ds.columns(["group=A"]).ravel().tolist() == [0.0, 1.0, 0.0]
    with pytest.raises(DataError):
        add_group_features(ds)


# ------------------------------------------------------------------ make_iid

def test_make_iid_breaks_group_label_link():
    for seed in range(10):
        y = (np.arange(10000) % 2).astype(int)
        ds = make_ds(y, np.where(y == 1, "A", "B"))
        out = make_iid(ds, seed)
        corr = np.corrcoef((out.group == "A").astype(float), out.labels)[0, 1]
        assert abs(corr) < 0.05


def test_make_iid_single_group_unchanged():
    ds = make_ds([0, 1, 0], ["A", "A", "A"])
    assert make_iid(ds, 3).group.tolist() == ["A", "A", "A"]


def test_make_iid_preserves_split_counts():
    split = ["train"] * 800 + ["validation"] * 100 + ["test"] * 100
    out = make_iid(make_ds(np.zeros(1000, int), ["A", "B"] * 500, split=split), 1)
    assert {s: int(out.mask(s).sum()) for s in ("train", "validation", "test")} == \
        {"train": 800, "validation": 100, "test": 100}
    assert (out.group == "A").sum() == 500


@given(st.integers(0, 2**32 - 1))
def test_make_iid_is_a_permutation(seed):
    ds = make_ds(np.zeros(30, int), list("ABC") * 10, split=["train", "test", "test"] * 10)
    out = make_iid(ds, seed)
    assert sorted(out.group) == sorted(ds.group) and sorted(out.split) == sorted(ds.split)
    assert np.array_equal(out.features, ds.features)


# --------------------------------------------------------------------- audit

def _planted(seed, n=4000):
    rng = np.random.default_rng(seed)
    g = rng.integers(0, 2, n)
    X = np.column_stack([g + 0.05 * rng.standard_normal(n), rng.standard_normal(n)])
    split = np.array(["train", "validation", "test"])[rng.integers(0, 3, n)]
    return Dataset(X, rng.integers(0, 2, n), np.where(g == 1, "A", "B"), split, ("gcopy", "z"))


def test_audit_detects_planted_group_feature():
    assert audit_iid(_planted(0)).group_auc > 0.95


def test_audit_constant_features_exactly_half():
    n = 400
    rng = np.random.default_rng(0)
    ds = Dataset(np.ones((n, 2)), rng.integers(0, 2, n), rng.choice(["A", "B"], n),
                 rng.choice(["train", "test"], n), ("a", "b"))
    rep = audit_iid(ds)
    assert rep.group_auc == 0.5 and rep.split_auc == 0.5


def test_audit_needs_something():
    with pytest.raises(DataError):
        audit_iid(make_ds([0, 1], ["A", "A"]))


# --------------------------------------------------------------------- noise

def test_zero_noise_identity(small_ds):
    out = inject_noise(small_ds, NoiseSpec({("A", 0): 0.0, ("B", 1): 0.0}, seed=1))
    assert np.array_equal(out.labels, small_ds.labels)


def test_certain_flip(small_ds):
    out = inject_noise(small_ds, NoiseSpec({("A", 0): 1.0}, seed=1))
    target = small_ds.mask("train") & (small_ds.group == "A") & (small_ds.labels == 0)
    assert np.all(out.labels[target] == 1)
    assert np.array_equal(out.labels[~target], small_ds.labels[~target])
    assert np.array_equal(out.clean_labels, small_ds.labels)


def test_noise_count_binomial():
    ds = make_ds(np.zeros(10000, int), ["A"] * 10000)
    hits = 0
    for seed in range(20):
        n = int(inject_noise(ds, NoiseSpec.for_target("label0", "A", 0.1, seed)).labels.sum())
        hits += abs(n - 1000) <= 90
    assert hits >= 19


def test_noise_never_touches_other_splits(small_ds):
    out = inject_noise(small_ds, NoiseSpec.for_target("both", "A", 1.0, seed=0))
    other = ~small_ds.mask("train")
    assert np.array_equal(out.labels[other], small_ds.labels[other])


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec({("A", 2): 0.1})
    with pytest.raises(ValueError):
        NoiseSpec({("A", 0): 1.5})
    with pytest.raises(ValueError):
        NoiseSpec.for_target("labels", "A", 0.1)
    assert NoiseSpec.for_target("label1", "B", 0.2).rate("B", 1) == 0.2
