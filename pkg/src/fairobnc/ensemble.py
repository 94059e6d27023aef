"""Bagged CART ensemble: margin oracle for the correction methods and downstream model.

Each learner is grown on a bootstrap sample (drawn with replacement) using
Gini impurity and midpoint thresholds.  Learner ``i`` draws from the random
substream ``(seed, "learner", i)``, so growing the ensemble from ``k`` to
``k' > k`` learners leaves the first ``k`` trees untouched.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._tree import apply_forest, build_tree
from .data import Dataset
from .errors import DataError, DegenerateDataError, EmptyFeatureSetError
from .rng import derive_seed, substream

DUMP_FORMAT = "fairobnc-ensemble"
DUMP_VERSION = 1


@dataclass(frozen=True)
class EnsembleParams:
    n_learners: int = 51
    max_depth: int = 8
    min_leaf: int = 1
    bootstrap_fraction: float = 1.0
    feature_subsample: float = 1.0
    excluded_features: frozenset = frozenset()
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        object.__setattr__(self, "excluded_features", frozenset(self.excluded_features))
        if self.n_learners < 1:
            raise ValueError("n_learners must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ValueError("bootstrap_fraction must lie in (0, 1]")
        if not 0.0 < self.feature_subsample <= 1.0:
            raise ValueError("feature_subsample must lie in (0, 1]")

    def with_(self, **changes) -> "EnsembleParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return EnsembleParams(**values)


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    positive: np.ndarray
    total: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def value(self) -> np.ndarray:
        # Laplace-smoothed positive fraction per node
        return (self.positive + 1.0) / (self.total + 2.0)


@dataclass(frozen=True, eq=False)
class FittedEnsemble:
    learners: tuple
    feature_names: tuple
    params: EnsembleParams = field(default_factory=EnsembleParams)

    def __post_init__(self):
        flat = _flatten(self.learners)
        object.__setattr__(self, "_flat", flat)

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    def matrix(self, ds: Dataset, rows: Optional[np.ndarray] = None) -> np.ndarray:
        X = ds.columns(self.feature_names)
        return X if rows is None else X[rows]

    def learner_scores(self, X: np.ndarray) -> np.ndarray:
        """Per-learner leaf scores, shape ``(n_learners, n_rows)``."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != len(self.feature_names):
            raise DataError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        feature, threshold, left, right, value, roots = self._flat
        leaves = apply_forest(X, feature, threshold, left, right, roots)
        return value[leaves]

    def learner_votes(self, X: np.ndarray) -> np.ndarray:
        """Per-learner class predictions; a leaf with equal class mass votes 1."""
        return (self.learner_scores(X) >= 0.5).astype(np.int64)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.learner_scores(X).mean(axis=0)

    def feature_importances(self) -> dict:
        """Total Gini decrease (bootstrap-weighted) per feature across all learners."""
        imp = np.zeros(len(self.feature_names))
        for tree in self.learners:
            split = tree.feature >= 0
            np.add.at(imp, tree.feature[split], tree.gain[split])
        return dict(zip(self.feature_names, imp.tolist()))

    # ------------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "format": DUMP_FORMAT,
            "version": DUMP_VERSION,
            "feature_names": list(self.feature_names),
            "params": {
                "n_learners": self.params.n_learners,
                "max_depth": self.params.max_depth,
                "min_leaf": self.params.min_leaf,
                "bootstrap_fraction": self.params.bootstrap_fraction,
                "feature_subsample": self.params.feature_subsample,
                "excluded_features": sorted(self.params.excluded_features),
                "seed": self.params.seed,
                "bootstrap": self.params.bootstrap,
            },
            "learners": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "positive": t.positive.tolist(),
                    "total": t.total.tolist(),
                    "gain": t.gain.tolist(),
                }
                for t in self.learners
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedEnsemble":
        if doc.get("format") != DUMP_FORMAT:
            raise DataError(f"not an ensemble dump (format={doc.get('format')!r})")
        if doc.get("version") != DUMP_VERSION:
            raise DataError(f"unsupported ensemble dump version {doc.get('version')!r}")
        learners = tuple(
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                positive=np.asarray(t["positive"], dtype=np.float64),
                total=np.asarray(t["total"], dtype=np.float64),
                gain=np.asarray(t["gain"], dtype=np.float64),
            )
            for t in doc["learners"]
        )
        return cls(learners, tuple(doc["feature_names"]), EnsembleParams(**doc["params"]))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FittedEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _flatten(learners):
    offsets = np.cumsum([0] + [t.n_nodes for t in learners])
    feature = np.concatenate([t.feature for t in learners])
    threshold = np.concatenate([t.threshold for t in learners])
    left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(learners, offsets)])
    right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(learners, offsets)])
    value = np.concatenate([t.value for t in learners])
    return feature, threshold, left, right, value, offsets[:-1].astype(np.int64)


def _grow(X, y, params: EnsembleParams, index: int) -> Tree:
    n, d = X.shape
    rng = substream(params.seed, "learner", index)
    if params.bootstrap:
        m = max(1, int(round(params.bootstrap_fraction * n)))
        counts = np.bincount(rng.integers(0, n, size=m), minlength=n)
    else:
        counts = np.ones(n, dtype=np.int64)
    allowed = np.ones(d, dtype=np.bool_)
    if params.feature_subsample < 1.0:
        k = max(1, math.ceil(params.feature_subsample * d))
        allowed[:] = False
        allowed[rng.choice(d, size=k, replace=False)] = True
    rows = np.flatnonzero(counts)
    Xs = np.ascontiguousarray(X[rows])
    orders = np.ascontiguousarray(np.argsort(Xs, axis=0, kind="stable").T)
    arrays = build_tree(
        Xs,
        counts[rows].astype(np.float64),
        y[rows].astype(np.float64),
        orders,
        allowed,
        params.max_depth,
        float(params.min_leaf),
    )
    return Tree(*arrays)


def fit_xy(X: np.ndarray, y: np.ndarray, params: EnsembleParams,
           feature_names: Optional[Sequence[str]] = None) -> FittedEnsemble:
    """Fit on a raw matrix; ``excluded_features`` are resolved against ``feature_names``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    unknown = params.excluded_features - set(names)
    if unknown:
        raise ValueError(f"excluded features not in data: {sorted(unknown)}")
    keep = [j for j, name in enumerate(names) if name not in params.excluded_features]
    if not keep:
        raise EmptyFeatureSetError("every feature is excluded")
    if len(y) == 0 or len(np.unique(y)) < 2:
        raise DegenerateDataError("training data must contain both classes")
    Xk = np.ascontiguousarray(X[:, keep])
    learners = tuple(_grow(Xk, y, params, i) for i in range(params.n_learners))
    return FittedEnsemble(learners, tuple(names[j] for j in keep), params)


def fit(ds: Dataset, params: EnsembleParams, labels: Optional[np.ndarray] = None) -> FittedEnsemble:
    """Fit on the train split of ``ds`` (optionally with substitute labels)."""
    train = ds.mask("train")
    if not train.any():
        raise DegenerateDataError("train split is empty")
    y = ds.labels if labels is None else np.asarray(labels)
    return fit_xy(ds.features[train], y[train], params, ds.feature_names)


# -------------------------------------------------------------------- margins


def vote_margin(ens: FittedEnsemble, x, y: int) -> float:
    """Supervised vote margin ``(2 v_y - v) / v`` for one instance."""
    votes = ens.learner_votes(np.asarray(x, dtype=np.float64).reshape(1, -1))[:, 0]
    v = len(votes)
    v_y = int(np.sum(votes == y))
    return (2 * v_y - v) / v


def score_margin(ens: FittedEnsemble, x, y: int) -> float:
    """Score margin ``-|y - mean learner score|`` for one instance."""
    s = ens.scores(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return -abs(y - float(s))


def vote_margins(ens: FittedEnsemble, X, y) -> np.ndarray:
    votes = ens.learner_votes(X)
    v = votes.shape[0]
    v_y = np.sum(votes == np.asarray(y)[None, :], axis=0)
    return (2 * v_y - v) / v


def score_margins(ens: FittedEnsemble, X, y) -> np.ndarray:
    return -np.abs(np.asarray(y) - ens.scores(X))


@dataclass(frozen=True, eq=False)
class MarginRanking:
    """Misclassified train instances by descending ``|margin|``, ties by index."""

    indices: np.ndarray
    margins: np.ndarray
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "margins", np.asarray(self.margins, dtype=np.float64))
        if self.indices.shape != self.margins.shape:
            raise ValueError("indices and margins must align")
        if self.mode not in ("vote", "score"):
            raise ValueError(f"mode must be 'vote' or 'score', got {self.mode!r}")

    def __len__(self):
        return len(self.indices)

    @classmethod
    def from_margins(cls, indices, abs_margins, mode: str) -> "MarginRanking":
        indices = np.asarray(indices, dtype=np.int64)
        abs_margins = np.asarray(abs_margins, dtype=np.float64)
        order = np.lexsort((indices, -abs_margins))
        return cls(indices[order], abs_margins[order], mode)


def rank_noisy(ens: FittedEnsemble, ds: Dataset, mode: str = "vote") -> MarginRanking:
    """Rank train instances the ensemble misclassifies by ``|margin|``."""
    rows = np.flatnonzero(ds.mask("train"))
    X = ens.matrix(ds, rows)
    y = ds.labels[rows]
    if mode == "vote":
        votes = ens.learner_votes(X)
        v = votes.shape[0]
        v1 = votes.sum(axis=0)
        pred = (2 * v1 >= v).astype(np.int64)
        v_y = np.where(y == 1, v1, v - v1)
        margin = np.abs((2 * v_y - v) / v)
    elif mode == "score":
        s = ens.scores(X)
        pred = (s >= 0.5).astype(np.int64)
        margin = np.abs(y - s)
    else:
        raise ValueError(f"mode must be 'vote' or 'score', got {mode!r}")
    wrong = pred != y
    return MarginRanking.from_margins(rows[wrong], margin[wrong], mode)


def predict_scores(ens: FittedEnsemble, ds: Dataset, split: str = "test") -> np.ndarray:
    rows = np.flatnonzero(ds.mask(split))
    if len(rows) == 0:
        raise ValueError(f"split {split!r} is empty")
    return ens.scores(ens.matrix(ds, rows))


def holdout_auc(X, y, params: EnsembleParams, seed: int = 0, key=(), holdout: float = 0.5) -> float:
    """AUC of an ensemble scored on a random held-out share of the rows."""
    from .metrics import roc_auc

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    key = key if isinstance(key, tuple) else (key,)
    rng = substream(seed, "holdout", *key)
    perm = rng.permutation(n)
    n_test = max(1, int(round(holdout * n)))
    test, train = perm[:n_test], perm[n_test:]
    if len(np.unique(y[train])) < 2 or len(np.unique(y[test])) < 2:
        raise DegenerateDataError("both classes are needed on each side of the holdout")
    probe = params.with_(excluded_features=frozenset(), seed=derive_seed(seed, "holdout-fit", *key))
    ens = fit_xy(X[train], y[train], probe)
    return roc_auc(y[test], ens.scores(X[test]))
