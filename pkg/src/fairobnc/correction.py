"""OBNC and Fair-OBNC label correction.

Budgets use a signed convention: ``F(s) > 0`` means flip that many of the
group's negatives to positive, ``F(s) < 0`` means flip ``|F(s)|`` positives to
negative.  Bounds and budgets are computed once, from the train split, before
the flipping loop starts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .ensemble import EnsembleParams, MarginRanking, fit, rank_noisy
from .metrics import floor_count

REPORT_FORMAT = "fairobnc-report"
REPORT_VERSION = 1

BUDGET_EXHAUSTED = "budget_exhausted"
FLIP_CAP_REACHED = "flip_cap_reached"
MARGIN_BELOW_THRESHOLD = "margin_below_threshold"
RANKING_EXHAUSTED = "ranking_exhausted"


def prevalence_bounds(p: float, d: float):
    """Allowed group prevalence band ``(p(1-d), min(p(1+d), 1))``."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= d <= 1.0:
        raise ValueError("p and d must lie in [0, 1]")
    return p * (1.0 - d), min(p * (1.0 + d), 1.0)


def _round_half_away(x: Fraction) -> int:
    r = math.floor(abs(x) + Fraction(1, 2))
    return r if x >= 0 else -r


@dataclass(frozen=True)
class FlipBudget:
    """Signed flip count per group plus the band it was computed against."""

    budgets: dict
    lower: float
    upper: float
    prevalence: float
    group_prevalence: dict
    group_size: dict
    clamped: tuple = ()

    def __getitem__(self, group):
        return self.budgets[group]


def flip_budget(labels, groups, d: float) -> FlipBudget:
    """Flips per group needed to bring ``P(y|s)`` into the band around ``P(y)``.

    Arithmetic is exact (rationals); budgets round to nearest, halves away
    from zero, and are clamped to the instances available in the class being
    flipped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups).astype(str)
    if labels.shape != groups.shape:
        raise ValueError("labels and groups must align")
    if len(labels) == 0:
        raise ValueError("empty label vector")
    if not 0.0 <= d <= 1.0:
        raise ValueError("d must lie in [0, 1]")
    p = Fraction(int(labels.sum()), len(labels))
    dd = Fraction(d)
    lo = p * (1 - dd)
    hi = min(p * (1 + dd), Fraction(1))
    budgets, prevs, sizes, clamped = {}, {}, {}, []
    for g in sorted(np.unique(groups).tolist()):
        sel = groups == g
        n_s = int(sel.sum())
        pos = int(labels[sel].sum())
        ps = Fraction(pos, n_s)
        if ps < lo:
            f = _round_half_away(n_s * lo - pos)
            if f > n_s - pos:
                f = n_s - pos
                clamped.append(g)
        elif ps > hi:
            f = _round_half_away(n_s * hi - pos)
            if -f > pos:
                f = -pos
                clamped.append(g)
        else:
            f = 0
        budgets[g] = int(f)
        prevs[g] = float(ps)
        sizes[g] = n_s
    return FlipBudget(budgets, float(lo), float(hi), float(p), prevs, sizes, tuple(clamped))


@dataclass(frozen=True)
class Flip:
    index: int
    old: int
    new: int
    margin: float
    group: str


@dataclass(frozen=True)
class CorrectionReport:
    method: str
    flipped: tuple
    stop_reason: str
    prevalence_before: dict
    prevalence_after: dict
    settings: dict = field(default_factory=dict)
    budget: Optional[dict] = None
    bounds: Optional[tuple] = None
    clamped: tuple = ()

    @property
    def flips_performed(self) -> int:
        return len(self.flipped)

    def to_dict(self) -> dict:
        doc = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "method": self.method,
            "settings": _jsonable(self.settings),
            "stop_reason": self.stop_reason,
            "flips_performed": self.flips_performed,
            "prevalence_before": self.prevalence_before,
            "prevalence_after": self.prevalence_after,
            "flips": [
                {"index": f.index, "group": f.group, "old": f.old, "new": f.new,
                 "direction": f"{f.old}->{f.new}", "margin": f.margin}
                for f in self.flipped
            ],
        }
        if self.budget is not None:
            doc["budget"] = self.budget
            doc["bounds"] = list(self.bounds)
            doc["clamped_groups"] = list(self.clamped)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_jsonable(v) for v in items]
    if isinstance(value, EnsembleParams):
        return _jsonable({f: getattr(value, f) for f in value.__dataclass_fields__})
    if isinstance(value, np.generic):
        return value.item()
    return value


def _train_prevalence(labels, groups, train) -> dict:
    out = {}
    for g in sorted(np.unique(groups[train]).tolist()):
        sel = train & (groups == g)
        out[g] = float(labels[sel].mean())
    return out


@dataclass(frozen=True)
class FairObncParams:
    max_flip_rate: float = 0.1
    disparity_target: float = 0.05
    margin_threshold: float = 0.0
    margin_mode: str = "vote"
    excluded_features: frozenset = frozenset()
    ensemble: EnsembleParams = field(default_factory=EnsembleParams)

    def __post_init__(self):
        object.__setattr__(self, "excluded_features", frozenset(self.excluded_features))
        for name in ("max_flip_rate", "disparity_target", "margin_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.margin_mode not in ("vote", "score"):
            raise ValueError(f"margin_mode must be 'vote' or 'score', got {self.margin_mode!r}")


def fair_obnc_flips(labels, groups, train, ranking: MarginRanking,
                    max_flip_rate: float, disparity_target: float,
                    margin_threshold: float = 0.0):
    """The Fair-OBNC flipping loop on pre-computed margins.

    Returns ``(new_labels, flips, stop_reason, budget)``.  Before each
    candidate the loop exits when every budget is zero, when the candidate's
    ``|margin|`` is below the threshold, or when the flip cap is reached.
    """
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups).astype(str)
    train = np.asarray(train, dtype=bool)
    n_train = int(train.sum())
    bad = ranking.indices[~train[ranking.indices]]
    if len(bad):
        raise ValueError(f"ranked indices {bad[:5].tolist()} are not train instances")
    budget = flip_budget(labels[train], groups[train], disparity_target)
    remaining = dict(budget.budgets)
    cap = floor_count(max_flip_rate, n_train)
    y = labels.copy()
    flips = []
    reason = None
    for i, m in zip(ranking.indices.tolist(), ranking.margins.tolist()):
        if all(v == 0 for v in remaining.values()):
            reason = BUDGET_EXHAUSTED
            break
        if m < margin_threshold:
            reason = MARGIN_BELOW_THRESHOLD
            break
        if len(flips) == cap:
            reason = FLIP_CAP_REACHED
            break
        s = groups[i]
        f = remaining[s]
        if (f > 0 and y[i] == 0) or (f < 0 and y[i] == 1):
            old = int(y[i])
            y[i] = 1 - old
            flips.append(Flip(i, old, 1 - old, m, s))
            remaining[s] = f - 1 if f > 0 else f + 1
    if reason is None:
        if all(v == 0 for v in remaining.values()):
            reason = BUDGET_EXHAUSTED
        elif len(flips) == cap:
            reason = FLIP_CAP_REACHED
        else:
            reason = RANKING_EXHAUSTED
    return y, tuple(flips), reason, budget


def fair_obnc(ds: Dataset, params: FairObncParams,
              ranking: Optional[MarginRanking] = None):
    """Fair-OBNC on the train split of ``ds``.

    ``ranking`` replaces the ensemble as margin oracle when given.  Returns
    ``(corrected_labels, CorrectionReport)``; non-train labels are unchanged.
    """
    if ranking is None:
        excluded = params.excluded_features | params.ensemble.excluded_features
        ens = fit(ds, params.ensemble.with_(excluded_features=excluded))
        ranking = rank_noisy(ens, ds, params.margin_mode)
    train = ds.mask("train")
    y, flips, reason, budget = fair_obnc_flips(
        ds.labels, ds.group, train, ranking,
        params.max_flip_rate, params.disparity_target, params.margin_threshold,
    )
    report = CorrectionReport(
        method="fair_obnc",
        flipped=flips,
        stop_reason=reason,
        prevalence_before=_train_prevalence(ds.labels, ds.group, train),
        prevalence_after=_train_prevalence(y, ds.group, train),
        settings={
            "max_flip_rate": params.max_flip_rate,
            "disparity_target": params.disparity_target,
            "margin_threshold": params.margin_threshold,
            "margin_mode": params.margin_mode,
            "excluded_features": params.excluded_features,
            "ensemble": params.ensemble,
            "ranking_size": len(ranking),
        },
        budget=budget.budgets,
        bounds=(budget.lower, budget.upper),
        clamped=budget.clamped,
    )
    return y, report


def obnc(ds: Dataset, k_fraction: float, ensemble: Optional[EnsembleParams] = None,
         ranking: Optional[MarginRanking] = None):
    """Original OBNC: relabel the top ``floor(k * N_train)`` ranked instances."""
    if not 0.0 <= k_fraction <= 1.0:
        raise ValueError("k_fraction must lie in [0, 1]")
    ensemble = ensemble or EnsembleParams()
    if ranking is None:
        ranking = rank_noisy(fit(ds, ensemble), ds, "vote")
    train = ds.mask("train")
    k = floor_count(k_fraction, int(train.sum()))
    y = ds.labels.copy()
    flips = []
    for i, m in zip(ranking.indices[:k].tolist(), ranking.margins[:k].tolist()):
        # misclassified binary instance: the ensemble predicts the other label
        old = int(y[i])
        y[i] = 1 - old
        flips.append(Flip(i, old, 1 - old, m, str(ds.group[i])))
    reason = FLIP_CAP_REACHED if k < len(ranking) else RANKING_EXHAUSTED
    report = CorrectionReport(
        method="obnc",
        flipped=tuple(flips),
        stop_reason=reason,
        prevalence_before=_train_prevalence(ds.labels, ds.group, train),
        prevalence_after=_train_prevalence(y, ds.group, train),
        settings={"k_fraction": k_fraction, "ensemble": ensemble, "ranking_size": len(ranking)},
    )
    return y, report
