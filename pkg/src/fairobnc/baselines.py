"""Pre-processing baselines: Massaging, Prevalence Sampling, Data Repairer, Suppression."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .correction import (
    REPORT_FORMAT, REPORT_VERSION, CorrectionReport, Flip, _jsonable, _train_prevalence,
)
from .data import Dataset
from .ensemble import EnsembleParams, fit, holdout_auc
from .errors import DegenerateDataError, EmptyFeatureSetError
from .rng import derive_seed, substream


@dataclass(frozen=True)
class BaselineReport:
    """Same document envelope as :class:`CorrectionReport`, with free-form changes."""

    method: str
    settings: dict
    changes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "method": self.method,
            "settings": _jsonable(self.settings),
            "changes": _jsonable(self.changes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def _need_groups(ds: Dataset, k: int = 2):
    groups = sorted(np.unique(ds.group[ds.mask("train")]).tolist())
    if len(groups) < k:
        raise DegenerateDataError(f"need at least {k} groups in the train split, got {len(groups)}")
    return groups


# ------------------------------------------------------------------ massaging


def massaging(ds: Dataset, ranker: EnsembleParams = None):
    """Promote top-scored negatives of the lowest-prevalence group and demote
    bottom-scored positives of the highest-prevalence group, one pair at a
    time, until train prevalences agree within ``1 / min |S|``.
    """
    ranker = ranker or EnsembleParams()
    groups = _need_groups(ds)
    train = ds.mask("train")
    scores = np.full(ds.n_rows, np.nan)
    rows = np.flatnonzero(train)
    ens = fit(ds, ranker)
    scores[rows] = ens.scores(ens.matrix(ds, rows))

    y = ds.labels.copy()
    sizes = {g: int(np.sum(train & (ds.group == g))) for g in groups}
    pos = {g: int(np.sum(y[train & (ds.group == g)])) for g in groups}
    tol = 1.0 / min(sizes.values())
    # candidate queues: negatives by score desc, positives by score asc (ties by index)
    promote_q, demote_q = {}, {}
    for g in groups:
        sel = np.flatnonzero(train & (ds.group == g))
        neg = sel[y[sel] == 0]
        pos_rows = sel[y[sel] == 1]
        promote_q[g] = deque(neg[np.lexsort((neg, -scores[neg]))].tolist())
        demote_q[g] = deque(pos_rows[np.lexsort((pos_rows, scores[pos_rows]))].tolist())

    flips = []
    while True:
        prev = {g: pos[g] / sizes[g] for g in groups}
        lo = min(groups, key=lambda g: (prev[g], g))
        hi = max(groups, key=lambda g: (prev[g], g))
        if prev[hi] - prev[lo] <= tol:
            break
        if not promote_q[lo] or not demote_q[hi]:
            break
        i = promote_q[lo].popleft()
        j = demote_q[hi].popleft()
        y[i], y[j] = 1, 0
        pos[lo] += 1
        pos[hi] -= 1
        flips.append(Flip(i, 0, 1, float(scores[i]), lo))
        flips.append(Flip(j, 1, 0, float(scores[j]), hi))

    report = CorrectionReport(
        method="massaging",
        flipped=tuple(flips),
        stop_reason="prevalences_equalized",
        prevalence_before=_train_prevalence(ds.labels, ds.group, train),
        prevalence_after=_train_prevalence(y, ds.group, train),
        settings={"ranker": ranker, "tolerance": tol},
    )
    return y, report


# -------------------------------------------------------- prevalence sampling


def prevalence_sample_rows(ds: Dataset, strategy: str = "undersample", seed: int = 0, target=None):
    """Row indices (sorted, duplicates adjacent) of the resampled dataset.

    Returns ``(rows, target, per_group_changes)``.
    """
    if strategy not in ("undersample", "oversample"):
        raise ValueError(f"strategy must be 'undersample' or 'oversample', got {strategy!r}")
    groups = _need_groups(ds)
    train = ds.mask("train")
    y = ds.labels
    counts = {}
    for g in groups:
        sel = train & (ds.group == g)
        p = int(np.sum(y[sel]))
        counts[g] = (p, int(sel.sum()) - p)
    if strategy == "undersample":
        for g, (p, n) in counts.items():
            if p == 0 or n == 0:
                raise DegenerateDataError(f"group {g!r} lacks one class; cannot undersample")
        t = min(p / (p + n) for p, n in counts.values()) if target is None else float(target)
    else:
        for g, (p, n) in counts.items():
            if p == 0:
                raise DegenerateDataError(f"group {g!r} has no positives; cannot oversample")
            if n == 0:
                raise DegenerateDataError(f"group {g!r} has no negatives; cannot oversample")
        t = float(np.mean(y[train])) if target is None else float(target)
    if not 0.0 < t < 1.0:
        raise DegenerateDataError(f"target prevalence {t} must lie in (0, 1)")

    rng = substream(seed, "prevalence_sampling", strategy)
    keep = [np.flatnonzero(~train)]
    changes = {}
    for g in groups:
        sel = np.flatnonzero(train & (ds.group == g))
        pos_rows, neg_rows = sel[y[sel] == 1], sel[y[sel] == 0]
        p, n = len(pos_rows), len(neg_rows)
        want_p = int(round(t * n / (1 - t)))
        want_n = int(round(p * (1 - t) / t))
        if abs(p / (p + n) - t) < 1e-12:
            pass
        elif strategy == "undersample":
            if p / (p + n) > t:
                pos_rows = rng.choice(pos_rows, size=max(1, min(p, want_p)), replace=False)
            else:
                neg_rows = rng.choice(neg_rows, size=max(1, min(n, want_n)), replace=False)
        else:
            if p / (p + n) < t:
                extra = rng.choice(pos_rows, size=max(0, want_p - p), replace=True)
                pos_rows = np.concatenate([pos_rows, extra])
            else:
                extra = rng.choice(neg_rows, size=max(0, want_n - n), replace=True)
                neg_rows = np.concatenate([neg_rows, extra])
        changes[g] = {"positives": [p, len(pos_rows)], "negatives": [n, len(neg_rows)]}
        keep += [pos_rows, neg_rows]
    rows = np.sort(np.concatenate(keep), kind="stable")
    return rows, t, changes


def prevalence_sampling(ds: Dataset, strategy: str = "undersample", seed: int = 0, target=None):
    """Resample the train split so every group has the same prevalence.

    Undersampling drops random rows of the class in excess (default target:
    the lowest group prevalence); oversampling duplicates random rows of the
    class in deficit (default target: pooled train prevalence).  Validation
    and test rows pass through untouched.
    """
    rows, t, changes = prevalence_sample_rows(ds, strategy, seed, target)
    out = ds.take(rows)
    report = BaselineReport(
        "prevalence_sampling",
        {"strategy": strategy, "seed": seed, "target": t},
        {"rows": changes, "prevalence_after": out.prevalence("train")},
    )
    return out, report


# -------------------------------------------------------------- data repairer


def _cdf_map(sorted_vals: np.ndarray):
    """Unique values and their mean normalised rank in [0, 1]."""
    n = len(sorted_vals)
    uniq, first, counts = np.unique(sorted_vals, return_index=True, return_counts=True)
    mean_pos = first + (counts - 1) / 2.0
    return uniq, (mean_pos / (n - 1) if n > 1 else np.full(len(uniq), 0.5))


def data_repairer(ds: Dataset, repair_level: float = 1.0):
    """Map each feature, per group, onto the pooled train distribution.

    A value's within-group rank (train-fitted empirical CDF, linearly
    interpolated) is sent through the pooled quantile function; the result
    is blended with the original value by ``repair_level``.  Applied to every
    split with the train-fitted maps.
    """
    if not 0.0 <= repair_level <= 1.0:
        raise ValueError("repair_level must lie in [0, 1]")
    train = ds.mask("train")
    groups = sorted(np.unique(ds.group).tolist())
    settings = {"repair_level": repair_level}
    if repair_level == 0.0 or len(groups) < 2:
        return ds, BaselineReport("data_repairer", settings, {"repaired_features": []})
    X = ds.features.copy()
    Xt = ds.features[train]
    for j in range(ds.n_features):
        pooled = np.sort(Xt[:, j])
        if len(pooled) == 0:
            break
        q_pos = np.linspace(0.0, 1.0, len(pooled)) if len(pooled) > 1 else np.array([0.5])
        for g in groups:
            rows = ds.group == g
            gvals = np.sort(Xt[ds.group[train] == g, j])
            if len(gvals) == 0:
                continue
            uniq, u = _cdf_map(gvals)
            ranks = np.interp(ds.features[rows, j], uniq, u)
            repaired = np.interp(ranks, q_pos, pooled)
            X[rows, j] = (1.0 - repair_level) * ds.features[rows, j] + repair_level * repaired
    out = ds.replace(features=X)
    return out, BaselineReport("data_repairer", settings, {"repaired_features": list(ds.feature_names)})


# ---------------------------------------------------------------- suppression


def _group_indicators(ds: Dataset, rows):
    groups = sorted(np.unique(ds.group[rows]).tolist())
    targets = groups[1:] if len(groups) == 2 else groups
    return {g: (ds.group[rows] == g).astype(np.float64) for g in targets}


def suppress_correlation(ds: Dataset, threshold: float = 0.5):
    """Drop features whose |Pearson r| with a group indicator exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    train = ds.mask("train")
    _need_groups(ds)
    Xt = ds.features[train]
    corr = {}
    for name, col in zip(ds.feature_names, Xt.T):
        best = 0.0
        for ind in _group_indicators(ds, train).values():
            if np.std(col) == 0 or np.std(ind) == 0:
                r = 0.0
            else:
                r = float(abs(np.corrcoef(col, ind)[0, 1]))
            best = max(best, r)
        corr[name] = best
    removed = [name for name in ds.feature_names if corr[name] > threshold]
    if len(removed) == ds.n_features:
        raise EmptyFeatureSetError("correlation suppression removed every feature")
    report = BaselineReport(
        "suppress_correlation",
        {"threshold": threshold},
        {"removed": removed, "correlations": corr},
    )
    return ds.drop_features(removed), report


def suppress_importance(ds: Dataset, stop_auc: float = 0.55, probe: EnsembleParams = None,
                        seed: int = 0, holdout: float = 0.3):
    """Backward elimination: while a probe predicts the group with held-out AUC
    above ``stop_auc``, drop the probe's most important feature.
    """
    if not 0.5 <= stop_auc <= 1.0:
        raise ValueError("stop_auc must lie in [0.5, 1]")
    probe = probe or EnsembleParams(n_learners=25, max_depth=6, min_leaf=5)
    train = ds.mask("train")
    _need_groups(ds)
    indicators = _group_indicators(ds, train)
    current = ds
    trace = []
    step = 0
    while True:
        Xt = current.features[train]
        aucs = {g: holdout_auc(Xt, ind, probe, seed=seed, key=("suppress", step, g), holdout=holdout)
                for g, ind in indicators.items()}
        g_max = max(aucs, key=lambda g: (aucs[g], g))
        auc = aucs[g_max]
        if auc <= stop_auc:
            trace.append({"step": step, "auc": auc, "removed": None})
            break
        ens = fit(current.replace(labels=(current.group == g_max).astype(np.int64)),
                  probe.with_(seed=derive_seed(seed, "suppress-fit", step)))
        imp = ens.feature_importances()
        worst = max(current.feature_names, key=lambda f: (imp[f], -current.feature_names.index(f)))
        trace.append({"step": step, "auc": auc, "removed": worst, "importance": imp[worst]})
        if current.n_features == 1:
            raise EmptyFeatureSetError("importance suppression removed every feature", trace)
        current = current.drop_features([worst])
        step += 1
    removed = [t["removed"] for t in trace if t["removed"] is not None]
    report = BaselineReport(
        "suppress_importance",
        {"stop_auc": stop_auc, "probe": probe, "seed": seed},
        {"removed": removed, "trace": trace},
    )
    return current, report
