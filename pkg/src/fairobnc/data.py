"""Dataset container, CSV ingestion, synthetic data, IID-ification and label noise."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import CsvParseError, DataError, DomainError, SchemaError
from .rng import substream

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Tabular binary-classification data with a sensitive group column.

    ``labels`` are the observed labels; after :func:`inject_noise` the
    pre-noise labels live in ``clean_labels`` and are meant for evaluation
    only.
    """

    features: np.ndarray
    labels: np.ndarray
    group: np.ndarray
    split: np.ndarray
    feature_names: tuple
    clean_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, d = X.shape
        labels = np.asarray(self.labels)
        group = np.asarray(self.group).astype(str)
        split = np.asarray(self.split).astype(str)
        names = tuple(str(s) for s in self.feature_names)
        for name, arr in (("labels", labels), ("group", group), ("split", split)):
            if arr.shape != (n,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({n},)")
        if len(names) != d:
            raise DataError(f"{len(names)} feature names for {d} feature columns")
        if len(set(names)) != d:
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        labels = _as_binary(labels, "labels")
        bad_split = set(np.unique(split)) - set(SPLITS)
        if bad_split:
            raise DomainError(f"unknown split ids {sorted(bad_split)}; allowed {SPLITS}")
        clean = self.clean_labels
        if clean is not None:
            clean = np.asarray(clean)
            if clean.shape != (n,):
                raise DataError(f"clean_labels has shape {clean.shape}, expected ({n},)")
            clean = _as_binary(clean, "clean_labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "clean_labels", clean)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def groups(self) -> list:
        """Sorted distinct group ids."""
        return sorted(np.unique(self.group).tolist())

    def mask(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.split == split

    def columns(self, names: Sequence[str]) -> np.ndarray:
        index = {name: j for j, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in index]
        if missing:
            raise DataError(f"features not in dataset: {missing}")
        return self.features[:, [index[name] for name in names]]

    def replace(self, **changes) -> "Dataset":
        values = dict(
            features=self.features,
            labels=self.labels,
            group=self.group,
            split=self.split,
            feature_names=self.feature_names,
            clean_labels=self.clean_labels,
        )
        values.update(changes)
        return Dataset(**values)

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset (or multiset, when ``rows`` repeats indices)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            group=self.group[rows],
            split=self.split[rows],
            feature_names=self.feature_names,
            clean_labels=None if self.clean_labels is None else self.clean_labels[rows],
        )

    def drop_features(self, names) -> "Dataset":
        names = set(names)
        keep = [j for j, name in enumerate(self.feature_names) if name not in names]
        return self.replace(
            features=self.features[:, keep],
            feature_names=tuple(self.feature_names[j] for j in keep),
        )

    def prevalence(self, split: str = "train", labels: Optional[np.ndarray] = None) -> dict:
        """P(y=1 | group) on one split."""
        y = self.labels if labels is None else labels
        m = self.mask(split)
        out = {}
        for g in self.groups:
            sel = m & (self.group == g)
            out[g] = float(y[sel].mean()) if sel.any() else float("nan")
        return out


def _as_binary(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind == "b":
        return arr.astype(np.int64)
    if arr.dtype.kind not in "iuf":
        raise DomainError(f"{name} must be numeric 0/1")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        bad = int(np.flatnonzero(~((arr == 0) | (arr == 1)))[0])
        raise DomainError(f"{name} value {arr[bad]!r} at index {bad} is not in {{0, 1}}")
    return arr.astype(np.int64)


# --------------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of a dataset CSV; every other column is a numeric feature."""

    label: str = "label"
    group: str = "group"
    split: Optional[str] = "split"
    clean_label: Optional[str] = "clean_label"
    required_split: bool = False
    required_clean_label: bool = False


def _parse_binary(cell: str, row: int, column: str) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise CsvParseError(f"row {row}, column {column!r}: {cell!r} is not a number", row, column)
    if value not in (0.0, 1.0):
        raise DomainError(f"row {row}, column {column!r}: label {cell!r} is not in {{0, 1}}")
    return int(value)


def load_csv(path, schema: Optional[CsvSchema] = None) -> Dataset:
    """Read a dataset CSV.  Row numbers in errors are 1-based data rows.

    Split and clean-label columns are optional unless the schema marks them
    required; without a split column every row is assigned to ``train``.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required")
        rows = list(reader)

    header = [h.strip() for h in header]
    pos = {name: j for j, name in enumerate(header)}
    for col in (schema.label, schema.group):
        if col not in pos:
            raise SchemaError(f"{path}: missing column {col!r}")
    split_col = schema.split if schema.split in pos else None
    clean_col = schema.clean_label if schema.clean_label in pos else None
    if schema.required_split and split_col is None:
        raise SchemaError(f"{path}: missing column {schema.split!r}")
    if schema.required_clean_label and clean_col is None:
        raise SchemaError(f"{path}: missing column {schema.clean_label!r}")
    roles = {schema.label, schema.group, split_col, clean_col}
    feat_cols = [name for name in header if name not in roles]

    n = len(rows)
    X = np.empty((n, len(feat_cols)), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    clean = np.empty(n, dtype=np.int64) if clean_col else None
    group = []
    split = []
    feat_pos = [pos[c] for c in feat_cols]
    for r, cells in enumerate(rows, start=1):
        if len(cells) != len(header):
            raise CsvParseError(f"row {r}: expected {len(header)} cells, got {len(cells)}", r)
        for j, (c, name) in enumerate(zip(feat_pos, feat_cols)):
            try:
                value = float(cells[c])
            except ValueError:
                raise CsvParseError(
                    f"row {r}, column {name!r}: {cells[c]!r} is not numeric", r, name
                )
            if not math.isfinite(value):
                raise CsvParseError(f"row {r}, column {name!r}: non-finite value", r, name)
            X[r - 1, j] = value
        labels[r - 1] = _parse_binary(cells[pos[schema.label]], r, schema.label)
        if clean_col:
            clean[r - 1] = _parse_binary(cells[pos[clean_col]], r, clean_col)
        group.append(cells[pos[schema.group]])
        if split_col:
            s = cells[pos[split_col]]
            if s not in SPLITS:
                raise DomainError(f"row {r}, column {split_col!r}: unknown split {s!r}")
            split.append(s)
        else:
            split.append("train")

    return Dataset(
        features=X,
        labels=labels,
        group=np.array(group, dtype=str),
        split=np.array(split, dtype=str),
        feature_names=tuple(feat_cols),
        clean_labels=clean,
    )


def save_csv(ds: Dataset, path, schema: Optional[CsvSchema] = None) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly.

    Features are written with ``repr`` (shortest round-tripping form).
    """
    schema = schema or CsvSchema()
    names = list(ds.feature_names)
    for col in (schema.label, schema.group, schema.split, schema.clean_label):
        if col in names:
            raise SchemaError(f"feature name {col!r} collides with a role column")
    header = names + [schema.label, schema.group, schema.split]
    if ds.clean_labels is not None:
        header.append(schema.clean_label)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n_rows):
            row = [repr(float(v)) for v in ds.features[i]]
            row += [str(int(ds.labels[i])), ds.group[i], ds.split[i]]
            if ds.clean_labels is not None:
                row.append(str(int(ds.clean_labels[i])))
            writer.writerow(row)


# --------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Two Gaussian class clusters with a group column drawn independently.

    Class 1 is shifted by ``class_separation / sqrt(n_features)`` along every
    axis, so the Mahalanobis distance between class means equals
    ``class_separation`` and the Bayes AUC is ``Phi(class_separation / sqrt(2))``.
    """

    n_rows: int = 10_000
    n_features: int = 5
    group_fractions: Mapping[str, float] = field(default_factory=lambda: {"A": 0.5, "B": 0.5})
    base_prevalence: float = 0.1
    class_separation: float = 2.0
    seed: int = 0
    split_fractions: Mapping[str, float] = field(
        default_factory=lambda: {"train": 0.6, "validation": 0.2, "test": 0.2}
    )

    def __post_init__(self):
        if self.n_rows <= 0 or self.n_features <= 0:
            raise ValueError("n_rows and n_features must be positive")
        if not 0.0 < self.base_prevalence < 1.0:
            raise ValueError("base_prevalence must lie in (0, 1)")
        if self.class_separation < 0:
            raise ValueError("class_separation must be non-negative")
        for what, fr in (("group_fractions", self.group_fractions), ("split_fractions", self.split_fractions)):
            if not fr or any(v < 0 for v in fr.values()):
                raise ValueError(f"{what} must be non-empty and non-negative")
            if abs(sum(fr.values()) - 1.0) > 1e-9:
                raise ValueError(f"{what} must sum to 1, got {sum(fr.values())}")
        if set(self.split_fractions) - set(SPLITS):
            raise ValueError(f"split_fractions keys must be among {SPLITS}")


def _split_counts(n: int, fractions: Mapping[str, float]) -> dict:
    # largest-remainder apportionment so counts sum to n exactly
    keys = [s for s in SPLITS if s in fractions]
    raw = [fractions[s] * n for s in keys]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(keys)), key=lambda j: (-(raw[j] - counts[j]), j))
    for j in order[: n - sum(counts)]:
        counts[j] += 1
    return dict(zip(keys, counts))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = substream(spec.seed, "generate_synthetic")
    n, d = spec.n_rows, spec.n_features
    labels = (rng.random(n) < spec.base_prevalence).astype(np.int64)
    shift = spec.class_separation / math.sqrt(d)
    X = rng.standard_normal((n, d)) + shift * labels[:, None]
    gids = list(spec.group_fractions)
    probs = np.array([spec.group_fractions[g] for g in gids], dtype=np.float64)
    group = np.array(gids, dtype=str)[rng.choice(len(gids), size=n, p=probs / probs.sum())]
    counts = _split_counts(n, spec.split_fractions)
    split = np.concatenate([np.full(c, s) for s, c in counts.items()]).astype(str)
    split = split[rng.permutation(n)]
    return Dataset(
        features=X,
        labels=labels,
        group=group,
        split=split,
        feature_names=tuple(f"f{j}" for j in range(d)),
        clean_labels=labels.copy(),
    )


def add_group_features(ds: Dataset, prefix: str = "group=") -> Dataset:
    """Append one 0/1 indicator column per group, named ``prefix + id``.

    Downstream models see the sensitive attribute through these columns;
    correction ensembles can exclude them by name.
    """
    names = [prefix + g for g in ds.groups]
    clash = set(names) & set(ds.feature_names)
    if clash:
        raise DataError(f"group indicator names already present: {sorted(clash)}")
    ind = np.stack([(ds.group == g).astype(np.float64) for g in ds.groups], axis=1)
    return ds.replace(
        features=np.hstack([ds.features, ind]),
        feature_names=ds.feature_names + tuple(names),
    )


def group_feature_names(ds: Dataset, prefix: str = "group=") -> list:
    return [prefix + g for g in ds.groups if prefix + g in ds.feature_names]


# ---------------------------------------------------------------- IID-ification


def make_iid(ds: Dataset, seed: int) -> Dataset:
    """Permute the group column and the split column independently."""
    rng = substream(seed, "make_iid")
    group = ds.group[rng.permutation(ds.n_rows)]
    split = ds.split[rng.permutation(ds.n_rows)]
    return ds.replace(group=group, split=split)


@dataclass(frozen=True)
class AuditReport:
    group_auc: Optional[float]
    split_auc: Optional[float]


def audit_iid(ds: Dataset, params=None, seed: int = 0, holdout: float = 0.5) -> AuditReport:
    """Held-out AUC of ensembles predicting the group and the split from features.

    With more than two classes the one-vs-rest AUCs are averaged.  A column
    with a single value yields ``None``.
    """
    from .ensemble import EnsembleParams, holdout_auc

    n_groups = len(np.unique(ds.group))
    n_splits = len(np.unique(ds.split))
    if n_groups < 2 and n_splits < 2:
        raise DataError("nothing to audit: a single group and a single split")
    if params is None:
        params = EnsembleParams(n_learners=25, max_depth=6, min_leaf=5)

    def one_vs_rest(column, tag):
        ids = sorted(np.unique(column).tolist())
        targets = ids[1:] if len(ids) == 2 else ids
        aucs = [
            holdout_auc(ds.features, (column == t).astype(np.int64), params,
                        seed=seed, key=(tag, t), holdout=holdout)
            for t in targets
        ]
        return float(np.mean(aucs))

    return AuditReport(
        group_auc=one_vs_rest(ds.group, "group") if n_groups >= 2 else None,
        split_auc=one_vs_rest(ds.split, "split") if n_splits >= 2 else None,
    )


# ------------------------------------------------------------------ label noise


@dataclass(frozen=True)
class NoiseSpec:
    """Flip probability per ``(group, class)`` cell; missing cells flip never."""

    rates: Mapping[tuple, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        clean = {}
        for key, rate in dict(self.rates).items():
            g, c = key
            if int(c) not in (0, 1):
                raise ValueError(f"noise class must be 0 or 1, got {c!r}")
            if not 0.0 <= float(rate) <= 1.0:
                raise ValueError(f"noise rate for {key!r} must lie in [0, 1], got {rate}")
            clean[(str(g), int(c))] = float(rate)
        object.__setattr__(self, "rates", clean)

    @classmethod
    def for_target(cls, target: str, group, rate: float, seed: int = 0) -> "NoiseSpec":
        """``target`` is ``label0``, ``label1`` or ``both``; noise hits one group."""
        classes = {"label0": (0,), "label1": (1,), "both": (0, 1)}
        if target not in classes:
            raise ValueError(f"noise target must be one of {sorted(classes)}, got {target!r}")
        return cls({(group, c): rate for c in classes[target]}, seed)

    def rate(self, group, cls_: int) -> float:
        return self.rates.get((str(group), int(cls_)), 0.0)


def inject_noise(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """Flip train-split labels independently with probability ``rates[(g, y)]``."""
    rng = substream(spec.seed, "inject_noise")
    # one uniform per row regardless of eligibility keeps streams aligned
    u = rng.random(ds.n_rows)
    p = np.zeros(ds.n_rows)
    for (g, c), rate in spec.rates.items():
        p[(ds.group == g) & (ds.labels == c)] = rate
    flip = ds.mask("train") & (u < p)
    labels = np.where(flip, 1 - ds.labels, ds.labels)
    clean = ds.labels.copy() if ds.clean_labels is None else ds.clean_labels
    return ds.replace(labels=labels, clean_labels=clean)
