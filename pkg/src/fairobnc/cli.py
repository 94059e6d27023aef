"""Command line entry point: ``fairobnc {generate,inject,correct,run,report}``.

Exit codes: 0 success, 1 config error, 2 data error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import bench
from .data import CsvSchema, NoiseSpec, SyntheticSpec, generate_synthetic, inject_noise, load_csv, save_csv
from .errors import ConfigError, DataError

log = logging.getLogger("fairobnc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

# concrete settings used by ``correct`` when the config leaves a value out
CORRECT_DEFAULTS = {
    "none": {},
    "obnc": {"k_fraction": 0.1},
    "fair_obnc": {"max_flip_rate": 0.1, "disparity_target": 0.05,
                  "margin_threshold": 0.0, "margin_mode": "vote"},
    "massaging": {},
    "prevalence_sampling": {"strategy": "undersample"},
    "data_repairer": {"repair_level": 1.0},
    "suppress_correlation": {"threshold": 0.5},
    "suppress_importance": {"stop_auc": 0.55},
}


def _read_config(path):
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc


def _schema(args) -> CsvSchema:
    return CsvSchema(label=args.label_col, group=args.group_col,
                     split=args.split_col, clean_label=args.clean_col)


def _read_dataset(args):
    try:
        return load_csv(args.input, _schema(args))
    except FileNotFoundError as exc:
        raise DataError(str(exc))


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    doc = _read_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = SyntheticSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthetic spec: {exc}")
    path = _out_dir(args) / "dataset.csv"
    save_csv(generate_synthetic(spec), path, _schema(args))
    print(path)


def _noise_spec(doc, seed) -> NoiseSpec:
    """``{target, group, rate}`` shorthand or ``{rates: [{group, class, rate}, ...]}``."""
    seed = int(doc.get("seed", 0) if seed is None else seed)
    try:
        if "rates" in doc:
            rates = {(r["group"], int(r["class"])): float(r["rate"]) for r in doc["rates"]}
            return NoiseSpec(rates, seed)
        return NoiseSpec.for_target(doc.get("target", "label0"), doc["group"], float(doc["rate"]), seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise spec: {exc}")


def cmd_inject(args):
    spec = _noise_spec(_read_config(args.config), args.seed)
    ds = _read_dataset(args)
    path = _out_dir(args) / "noisy.csv"
    save_csv(inject_noise(ds, spec), path, _schema(args))
    print(path)


def cmd_correct(args):
    doc = _read_config(args.config)
    method = args.method or doc.pop("method", None)
    doc.pop("method", None)
    if method not in CORRECT_DEFAULTS:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(CORRECT_DEFAULTS)}")
    hp = dict(CORRECT_DEFAULTS[method])
    exclude = doc.pop("exclude_features", None)
    hp.update(doc)
    ds = _read_dataset(args)
    if exclude is None:
        exclude = [f for f in ds.feature_names if f.startswith("group=")]
    spec = bench.MethodSpec(method, method, {}, exclude_sensitive=bool(exclude))
    seed = 0 if args.seed is None else args.seed
    out, _, report = bench.apply_method(spec, ds, hp, seed, exclude)
    out_dir = _out_dir(args)
    save_csv(out, out_dir / "corrected.csv", _schema(args))
    if report is not None:
        report.save(out_dir / "report.json")
    print(out_dir / "corrected.csv")


def cmd_run(args):
    config = bench.load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = args.out_dir or config.out_dir
    if out is None:
        raise ConfigError("no output directory: pass --out-dir or set out_dir in the config")
    paths = bench.run(config, out_dir=out, jobs=args.jobs)
    for p in paths.values():
        print(p)


def cmd_report(args):
    try:
        records = bench.read_trials(args.input)
    except FileNotFoundError as exc:
        raise DataError(str(exc))
    missing = set(bench.COORDS + ["status"]) - set(records.columns)
    if missing:
        raise DataError(f"{args.input}: not a trials file, missing {sorted(missing)}")
    paths = bench.write_report(records, args.out_dir)
    for p in paths.values():
        print(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairobnc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=False, out_required=True):
        p.add_argument("--config", help="YAML/JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", required=out_required)
        p.add_argument("--jobs", type=int, default=1)
        if needs_input:
            p.add_argument("--input", required=True)
        p.add_argument("--label-col", default="label")
        p.add_argument("--group-col", default="group")
        p.add_argument("--split-col", default="split")
        p.add_argument("--clean-col", default="clean_label")

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inject", help="inject group/class-dependent label noise")
    common(p, needs_input=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("correct", help="apply one pre-processing method")
    common(p, needs_input=True)
    p.add_argument("--method", choices=sorted(CORRECT_DEFAULTS))
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("run", help="run a full experiment grid")
    common(p, out_required=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate a trials CSV into summary tables")
    common(p, needs_input=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and args.config is None:
        print("error: run needs --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
