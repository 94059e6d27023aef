"""Experiment orchestration: noise scenarios x rates x methods x random-search trials.

Every random draw is keyed by its record coordinates, never by execution
order, so a run is a pure function of the config and base seed and adding a
method (or a scenario) leaves every other row unchanged.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import baselines
from .correction import FairObncParams, fair_obnc, obnc
from .data import (
    CsvSchema, Dataset, NoiseSpec, SyntheticSpec, add_group_features, generate_synthetic,
    group_feature_names, inject_noise, load_csv, make_iid,
)
from .ensemble import EnsembleParams, fit, predict_scores
from .errors import ConfigError
from .metrics import model_metrics, reconstruction
from .rng import derive_seed, substream

log = logging.getLogger(__name__)

ENSEMBLE_KEYS = ("n_learners", "max_depth", "min_leaf", "bootstrap", "bootstrap_fraction", "feature_subsample")

ENSEMBLE_SPACE = {
    "n_learners": {"low": 11, "high": 101, "step": 2},
    "max_depth": {"low": 3, "high": 12},
    "min_leaf": {"low": 5, "high": 50},
    "bootstrap_fraction": {"low": 0.5, "high": 1.0},
}

DEFAULT_SPACES = {
    "none": {},
    "obnc": {"k_fraction": {"low": 0.05, "high": 0.5}, **ENSEMBLE_SPACE},
    "fair_obnc": {
        "max_flip_rate": {"low": 0.05, "high": 0.5},
        "disparity_target": {"low": 0.0, "high": 0.1},
        "margin_threshold": {"low": 0.0, "high": 0.4},
        "margin_mode": ["vote", "score"],
        **ENSEMBLE_SPACE,
    },
    "massaging": dict(ENSEMBLE_SPACE),
    "prevalence_sampling": {"strategy": ["undersample", "oversample"]},
    "data_repairer": {"repair_level": {"low": 0.0, "high": 1.0}},
    "suppress_correlation": {"threshold": {"low": 0.05, "high": 0.5}},
    "suppress_importance": {"stop_auc": {"low": 0.52, "high": 0.6}},
}

# methods whose output is an edited label vector on the same rows
LABEL_EDITING = {"none", "obnc", "fair_obnc", "massaging"}


# -------------------------------------------------------------- hyperparameters


def _draw(spec, rng: np.random.Generator, name: str):
    if isinstance(spec, (list, tuple)):
        if not spec:
            raise ConfigError(f"hyperparameter {name!r}: empty choice list")
        return spec[int(rng.integers(len(spec)))]
    if isinstance(spec, dict):
        if "low" not in spec or "high" not in spec:
            raise ConfigError(f"hyperparameter {name!r}: range needs 'low' and 'high'")
        low, high = spec["low"], spec["high"]
        if low > high:
            raise ConfigError(f"hyperparameter {name!r}: empty range [{low}, {high}]")
        is_int = isinstance(low, int) and isinstance(high, int) and not spec.get("float", False)
        if is_int:
            step = int(spec.get("step", 1))
            if step < 1:
                raise ConfigError(f"hyperparameter {name!r}: step must be >= 1")
            values = range(low, high + 1, step)
            return int(values[int(rng.integers(len(values)))])
        if spec.get("log", False):
            if low <= 0:
                raise ConfigError(f"hyperparameter {name!r}: log range needs low > 0")
            return float(math.exp(rng.uniform(math.log(low), math.log(high))))
        return float(rng.uniform(low, high))
    return spec


def sample_hyperparameters(space: dict, seed: int, *keys) -> dict:
    """One independent draw per dimension, each from its own keyed substream.

    A dimension is a fixed scalar, a list (uniform choice) or a dict range
    ``{low, high}``: integer when both ends are ints (optional ``step``),
    otherwise uniform float, log-uniform with ``log: true``.
    """
    if not isinstance(space, dict):
        raise ConfigError("hyperparameter space must be a mapping")
    return {name: _draw(space[name], substream(seed, "hparams", *keys, name), name)
            for name in sorted(space)}


def _ensemble_params(hp: dict, seed: int, **extra) -> EnsembleParams:
    kw = {k: hp[k] for k in ENSEMBLE_KEYS if k in hp}
    return EnsembleParams(seed=seed, **kw, **extra)


# ---------------------------------------------------------------------- config


@dataclass(frozen=True)
class Scenario:
    noise_target: str
    noisy_group: str
    rates: tuple = (0.05, 0.10, 0.20)

    def __post_init__(self):
        if self.noise_target not in ("label0", "label1", "both"):
            raise ConfigError(f"noise_target must be label0, label1 or both, got {self.noise_target!r}")
        rates = tuple(float(r) for r in self.rates)
        if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
            raise ConfigError("scenario rates must be a non-empty list within [0, 1]")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "noisy_group", str(self.noisy_group))

    @property
    def key(self) -> str:
        return f"{self.noise_target}:{self.noisy_group}"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    method: str
    space: dict
    exclude_sensitive: bool = False


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    scenarios: list = field(default_factory=lambda: [Scenario("label0", "A")])
    methods: list = field(default_factory=list)
    n_trials: int = 50
    seed: int = 0
    out_dir: Optional[str] = None
    top_fraction: float = 0.01
    group_as_feature: bool = True
    resample_noise_per_trial: bool = True
    downstream: dict = field(default_factory=lambda: dict(ENSEMBLE_SPACE))

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not 0.0 < self.top_fraction <= 1.0:
            raise ConfigError("top_fraction must lie in (0, 1]")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method names must be unique, got {names}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            scenarios = [Scenario(**s) for s in doc.pop("scenarios", [{"noise_target": "label0", "noisy_group": "A"}])]
        except TypeError as exc:
            raise ConfigError(f"bad scenario entry: {exc}")
        methods = [_method_spec(m) for m in doc.pop("methods", [])]
        return cls(scenarios=scenarios, methods=methods, **doc)


def _method_spec(entry) -> MethodSpec:
    if isinstance(entry, str):
        entry = {"method": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"method entry must be a name or mapping, got {entry!r}")
    entry = dict(entry)
    method = entry.pop("method", None) or entry.get("name")
    if method not in DEFAULT_SPACES:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(DEFAULT_SPACES)}")
    name = entry.pop("name", method)
    space = dict(DEFAULT_SPACES[method])
    space.update(entry.pop("space", {}) or {})
    exclude = entry.pop("exclude_sensitive", method == "fair_obnc")
    if entry:
        raise ConfigError(f"unknown keys in method {name!r}: {sorted(entry)}")
    return MethodSpec(str(name), method, space, bool(exclude))


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON experiment config."""
    import yaml

    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return ExperimentConfig.from_dict(doc)


def load_dataset(source: dict) -> Dataset:
    if not isinstance(source, dict) or len(source) != 1:
        raise ConfigError("dataset must be {synthetic: {...}} or {csv: {path: ..., schema: {...}}}")
    (kind, value), = source.items()
    if kind == "synthetic":
        try:
            return generate_synthetic(SyntheticSpec(**(value or {})))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic spec: {exc}")
    if kind == "csv":
        value = {"path": value} if isinstance(value, str) else dict(value)
        return load_csv(value["path"], CsvSchema(**value.get("schema", {})))
    raise ConfigError(f"unknown dataset source {kind!r}")


# ---------------------------------------------------------------------- trials


def apply_method(spec: MethodSpec, ds: Dataset, hp: dict, seed: int, sensitive=()):
    """Run one pre-processing method; returns ``(train_ready_ds, edited_labels, report)``.

    ``edited_labels`` is ``None`` for methods that do not edit labels row-wise.
    """
    m = spec.method
    if m == "none":
        return ds, ds.labels, None
    if m == "obnc":
        y, rep = obnc(ds, hp["k_fraction"], _ensemble_params(hp, seed))
        return ds.replace(labels=y), y, rep
    if m == "fair_obnc":
        params = FairObncParams(
            max_flip_rate=hp["max_flip_rate"],
            disparity_target=hp["disparity_target"],
            margin_threshold=hp["margin_threshold"],
            margin_mode=hp["margin_mode"],
            excluded_features=frozenset(sensitive) if spec.exclude_sensitive else frozenset(),
            ensemble=_ensemble_params(hp, seed),
        )
        y, rep = fair_obnc(ds, params)
        return ds.replace(labels=y), y, rep
    if m == "massaging":
        y, rep = baselines.massaging(ds, _ensemble_params(hp, seed))
        return ds.replace(labels=y), y, rep
    if m == "prevalence_sampling":
        out, rep = baselines.prevalence_sampling(ds, hp["strategy"], seed=seed)
        return out, None, rep
    if m == "data_repairer":
        out, rep = baselines.data_repairer(ds, hp["repair_level"])
        return out, None, rep
    if m == "suppress_correlation":
        out, rep = baselines.suppress_correlation(ds, hp["threshold"])
        return out, None, rep
    if m == "suppress_importance":
        probe = EnsembleParams(n_learners=25, max_depth=6, min_leaf=5)
        out, rep = baselines.suppress_importance(ds, hp["stop_auc"], probe, seed=seed)
        return out, None, rep
    raise ConfigError(f"unknown method {m!r}")


@dataclass
class _Context:
    config: ExperimentConfig
    base: Dataset
    groups: list
    sensitive: list


def _prepare(config: ExperimentConfig) -> _Context:
    ds = make_iid(load_dataset(config.dataset), derive_seed(config.seed, "iid"))
    if ds.clean_labels is None:
        ds = ds.replace(clean_labels=ds.labels.copy())
    if config.group_as_feature:
        ds = add_group_features(ds)
    for sc in config.scenarios:
        if sc.noisy_group not in ds.groups:
            raise ConfigError(f"scenario group {sc.noisy_group!r} not in dataset groups {ds.groups}")
    return _Context(config, ds, ds.groups, group_feature_names(ds))


def _metric_columns(groups) -> list:
    cols = ["n_flips", "reconstruction_score", "fpr_r", "fnr_r"]
    for g in groups:
        cols += [f"fpr_r_{g}", f"fnr_r_{g}"]
    cols += ["tpr", "dp_ratio", "threshold"]
    cols += [f"pred_prevalence_{g}" for g in groups]
    return cols


def _run_cell(ctx: _Context, scenario: Scenario, rate: float, trial: int, methods) -> list:
    cfg = ctx.config
    noise_keys = (scenario.key, rate, trial) if cfg.resample_noise_per_trial else (scenario.key, rate)
    noise = NoiseSpec.for_target(scenario.noise_target, scenario.noisy_group, rate,
                                 seed=derive_seed(cfg.seed, "noise", *noise_keys))
    noisy = inject_noise(ctx.base, noise)
    train = noisy.mask("train")
    down_hp = sample_hyperparameters(cfg.downstream, cfg.seed, "downstream", trial)
    down_seed = derive_seed(cfg.seed, "downstream-fit", scenario.key, rate, trial)
    rows = []
    for spec in methods:
        rec = {
            "method": spec.name, "noise_target": scenario.noise_target,
            "noisy_group": scenario.noisy_group, "rate": rate, "trial": trial,
            "status": "ok", "error": "",
        }
        try:
            hp = sample_hyperparameters(spec.space, cfg.seed, spec.name, trial)
            rec["hyperparameters"] = json.dumps(hp, sort_keys=True)
            rec["downstream_hyperparameters"] = json.dumps(down_hp, sort_keys=True)
            mseed = derive_seed(cfg.seed, "method", spec.name, scenario.key, rate, trial)
            out, edited, report = apply_method(spec, noisy, hp, mseed, ctx.sensitive)
            if edited is not None:
                rm = reconstruction(noisy.clean_labels[train], edited[train], noisy.group[train])
                rec["n_flips"] = int(np.sum(edited[train] != noisy.labels[train]))
                rec["reconstruction_score"] = rm.reconstruction_score
                rec["fpr_r"], rec["fnr_r"] = rm.fpr_r, rm.fnr_r
                for g, pg in rm.per_group.items():
                    rec[f"fpr_r_{g}"], rec[f"fnr_r_{g}"] = pg["fpr_r"], pg["fnr_r"]
            model = fit(out, _ensemble_params(down_hp, down_seed))
            test = out.mask("test")
            mm = model_metrics(predict_scores(model, out, "test"), out.clean_labels[test],
                               out.group[test], cfg.top_fraction)
            rec["tpr"], rec["dp_ratio"], rec["threshold"] = mm.tpr, mm.dp_ratio, mm.threshold
            for g, v in mm.predicted_prevalence.items():
                rec[f"pred_prevalence_{g}"] = v
        except Exception as exc:  # a failed trial is a record, not a crash
            log.warning("trial failed: %s %s rate=%s trial=%s: %s", spec.name, scenario.key, rate, trial, exc)
            rec = {k: rec[k] for k in ("method", "noise_target", "noisy_group", "rate", "trial",
                                       "hyperparameters") if k in rec}
            rec["status"] = "failed"
            rec["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(rec)
    return rows


COORDS = ["method", "noise_target", "noisy_group", "rate", "trial"]
CELL = ["method", "noise_target", "noisy_group", "rate"]


def run_trials(config: ExperimentConfig, jobs: int = 1) -> pd.DataFrame:
    """All trial records as a frame sorted by coordinates."""
    ctx = _prepare(config)
    tasks = [(sc, rate, t) for sc in config.scenarios for rate in sc.rates for t in range(config.n_trials)]
    if jobs == 1:
        chunks = [_run_cell(ctx, sc, rate, t, config.methods) for sc, rate, t in tasks]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=jobs)(
            delayed(_run_cell)(ctx, sc, rate, t, config.methods) for sc, rate, t in tasks
        )
    records = [r for chunk in chunks for r in chunk]
    cols = COORDS + ["status", "error", "hyperparameters", "downstream_hyperparameters"] + _metric_columns(ctx.groups)
    df = pd.DataFrame.from_records(records)
    df = df.reindex(columns=cols)
    # nullable so rows without label edits do not turn the counts into floats
    df["n_flips"] = df["n_flips"].astype("Int64")
    return df.sort_values(COORDS, kind="stable").reset_index(drop=True)


def metric_columns(df: pd.DataFrame) -> list:
    skip = set(COORDS) | {"status", "error", "hyperparameters", "downstream_hyperparameters"}
    return [c for c in df.columns if c not in skip]


def aggregate(records: pd.DataFrame) -> pd.DataFrame:
    """Mean of every metric per (method, scenario, rate) over successful trials.

    Undefined values (e.g. an FNR with no clean positives) are skipped.
    Cells without a successful trial keep a row with ``n_trials == 0``.
    """
    metrics = metric_columns(records)
    out = []
    for key, cell in records.groupby(CELL, sort=True, dropna=False):
        ok = cell[cell["status"] == "ok"]
        row = dict(zip(CELL, key))
        row["n_trials"] = len(ok)
        row["n_failed"] = int((cell["status"] != "ok").sum())
        for m in metrics:
            vals = pd.to_numeric(ok[m], errors="coerce").dropna()
            row[m] = float(np.mean(vals.to_numpy())) if len(vals) else np.nan
        out.append(row)
    return pd.DataFrame(out, columns=CELL + ["n_trials", "n_failed"] + metrics)


def plot_data(summary: pd.DataFrame) -> pd.DataFrame:
    """Rate versus mean TPR and mean demographic-parity ratio, per method and scenario."""
    cols = ["noise_target", "noisy_group", "method", "rate", "tpr", "dp_ratio", "n_trials"]
    return summary[cols].sort_values(["noise_target", "noisy_group", "method", "rate"], kind="stable")


def reconstruction_table(summary: pd.DataFrame) -> str:
    """Markdown table: reconstruction rows per scenario, (rate, method) columns."""
    groups = sorted({c[len("fpr_r_"):] for c in summary.columns if c.startswith("fpr_r_")})
    metrics = ["reconstruction_score", "fpr_r", "fnr_r"]
    for g in groups:
        metrics += [f"fpr_r_{g}", f"fnr_r_{g}"]
    lines = []
    for (target, group), sc in summary.groupby(["noise_target", "noisy_group"], sort=True):
        sc = sc.dropna(subset=["reconstruction_score"])
        if sc.empty:
            continue
        cols = list(sc.sort_values(["rate", "method"]).itertuples(index=False))
        lines.append(f"### noise on {target}, group {group}\n")
        lines.append("| metric | " + " | ".join(f"{c.rate:g} {c.method}" for c in cols) + " |")
        lines.append("|---" * (len(cols) + 1) + "|")
        for m in metrics:
            vals = []
            for c in cols:
                v = getattr(c, m)
                vals.append("" if pd.isna(v) else f"{v:.3f}")
            lines.append(f"| {m} | " + " | ".join(vals) + " |")
        lines.append("")
    return "\n".join(lines)


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def write_report(records: pd.DataFrame, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = aggregate(records)
    paths = {"summary": out / "summary.csv", "plot_data": out / "plot_data.csv",
             "table": out / "reconstruction_table.md"}
    _write_csv(summary, paths["summary"])
    _write_csv(plot_data(summary), paths["plot_data"])
    paths["table"].write_text(reconstruction_table(summary) + "\n", encoding="utf-8")
    return paths


def run(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> dict:
    """Run the grid and write ``trials.csv``, ``summary.csv``, ``plot_data.csv``
    and a markdown reconstruction table into ``out_dir``.
    """
    out_dir = out_dir or config.out_dir
    if out_dir is None:
        raise ConfigError("no output directory given")
    records = run_trials(config, jobs=jobs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(records, out / "trials.csv")
    paths = write_report(records, out)
    paths["trials"] = out / "trials.csv"
    return paths


def read_trials(path) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=True, float_precision="round_trip",
                       dtype={"noisy_group": str, "error": str})
