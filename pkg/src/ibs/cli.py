"""``ibs`` command line: generate | train | boundary | attribute | validate | report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 a validation check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import pipeline
from .datagen import PRESETS, read_dataset_csv
from .errors import ConfigurationError, DataFormatError, IBSError, InputShapeError
from .nn import TrainConfig, load_model
from .search import SearchConfig, read_boundary_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _output_root() -> Path:
    return Path(os.environ.get(pipeline.OUTPUT_ENV, "ibs-output"))


def _out_path(arg, default_name) -> Path:
    return Path(arg) if arg else _output_root() / default_name


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _dataclass_kwargs(cls, args, mapping):
    names = {f.name for f in fields(cls)}
    return {name: getattr(args, attr) for attr, name in mapping.items()
            if name in names and getattr(args, attr) is not None}


def _train_config(args) -> TrainConfig:
    return TrainConfig(**_dataclass_kwargs(TrainConfig, args, {
        "lr": "learning_rate", "epochs": "epochs", "batch_size": "batch_size",
        "weight_decay": "weight_decay", "split_fraction": "split_fraction", "seed": "seed"}))


def _search_config(args) -> SearchConfig:
    return SearchConfig(**_dataclass_kwargs(SearchConfig, args, {
        "epsilon": "epsilon", "max_steps": "max_steps", "gamma": "gamma",
        "seed": "pool_seed", "pool_subsample": "pool_subsample"}))


def _print_json(obj):
    print(json.dumps(obj, indent=1, sort_keys=True, default=pipeline._json_default))


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    out = _out_path(args.out, f"{args.preset}.csv")
    dataset, layout, files = pipeline.generate(args.preset, args.seed, out, **_overrides(args.set))
    n1 = int(dataset.labels.sum())
    print(f"{args.preset}: {dataset.n_samples} samples x {dataset.n_features} features "
          f"({dataset.n_samples - n1} class 0, {n1} class 1) -> {', '.join(map(str, files))}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_path(args.out, "model.json")
    hidden = tuple(args.hidden) if args.hidden else (10,) * 5
    model, m = pipeline.train_file(args.dataset, out, _train_config(args), hidden)
    print(f"accuracy {m['accuracy']:.4f} f1 {m['f1']:.4f} "
          f"(train {m['n_train']}, test {m['n_test']}) -> {out}")
    return EXIT_OK


def cmd_boundary(args) -> int:
    out = _out_path(args.out, "boundary.csv")
    bset, stats = pipeline.boundary_file(args.model, args.dataset, args.n, _search_config(args), out)
    line = (f"converged {stats['n_converged']}/{stats['n_started']} "
            f"({stats['convergence_rate']:.2%})")
    if "manifold_fraction" in stats:
        line += (f", manifold {stats['manifold_fraction']:.2%} within "
                 f"p{stats['manifold_percentile']:g} = {stats['manifold_threshold']:.4g}")
    print(f"{line} -> {out}")
    return EXIT_OK


def cmd_attribute(args) -> int:
    model = load_model(args.model)
    dataset = read_dataset_csv(args.dataset)
    modes = args.mode or ["optimal"]
    samples = read_boundary_csv(args.boundary) if args.boundary else None
    custom = None
    if args.baseline is not None:
        custom = np.array([float(v) for v in args.baseline.split(",")])
    if args.sample_ids:
        ids = args.sample_ids
    else:
        _, te = pipeline.training_split(model, dataset)
        ids = te[: args.n_samples].tolist()
    out = Path(args.out) if args.out else _output_root() / "attribute"
    layout = pipeline.load_dataset_layout(args.dataset)
    records, _ = pipeline.attribute(model, dataset, samples, ids, modes, out, args.steps, layout,
                                    custom, args.noise_seed, args.epsilon,
                                    figures=not args.no_figures)
    for r in records:
        a = r["attribution"]
        print(f"sample {r['sample_id']} {r['mode']}: distance {r['distance']:.4g} "
              f"crossings {r['crossings']} negatives {a['n_negative']} "
              f"residual {a['completeness_residual']:.2e}")
    stats = pipeline.attribution_stats(records)
    pipeline.dump_json(stats, out / "attribution_stats.json")
    return EXIT_OK


def cmd_validate(args) -> int:
    model = load_model(args.model)
    samples = read_boundary_csv(args.boundary)
    train_features = None
    if args.dataset:
        dataset = read_dataset_csv(args.dataset)
        tr, _ = pipeline.training_split(model, dataset)
        train_features = dataset.features[tr]
    checks = pipeline.validate(model, samples, train_features, args.epsilon, args.grid_resolution)
    for name, c in checks.items():
        detail = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in sorted(c.items()) if k != "status")
        print(f"{c['status'].upper():7s} {name}: {detail}")
    if args.out:
        pipeline.dump_json(checks, args.out)
    return EXIT_VALIDATION if any(c["status"] == "fail" for c in checks.values()) else EXIT_OK


def _set_nested(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def cmd_report(args) -> int:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config}:{exc.lineno}: {exc.msg}") from exc
    for k, v in _overrides(args.set).items():
        _set_nested(raw, k, v)
    if args.preset:
        _set_nested(raw, "dataset.preset", args.preset)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = pipeline.ExperimentConfig.from_dict(raw)
    out = Path(args.out) if args.out else (Path(raw["output_dir"]) if "output_dir" in raw
                                           else _output_root() / "report")
    report = pipeline.run_report(config, out)
    _print_json({k: report[k] for k in ("metrics", "boundary", "attribution", "validation")})
    print(f"report -> {out / 'report.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ibs", description="Decision-boundary baselines for Integrated Gradients.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("preset", choices=sorted(PRESETS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help=f"CSV path (default ${pipeline.OUTPUT_ENV}/<preset>.csv)")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="generator override")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the MLP on a dataset file")
    t.add_argument("dataset")
    t.add_argument("--out", help="model JSON path")
    t.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths")
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--split-fraction", type=float)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("boundary", help="sample the decision boundary with IBS")
    b.add_argument("model")
    b.add_argument("dataset")
    b.add_argument("-n", type=int, default=1000, help="number of searches")
    b.add_argument("--out", help="boundary CSV path")
    b.add_argument("--epsilon", type=float)
    b.add_argument("--max-steps", type=int)
    b.add_argument("--gamma", type=float)
    b.add_argument("--pool-subsample", type=int)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_boundary)

    a = sub.add_parser("attribute", help="Integrated Gradients against chosen baselines")
    a.add_argument("model")
    a.add_argument("dataset")
    a.add_argument("boundary", nargs="?", help="boundary CSV (needed by optimal and random-db)")
    a.add_argument("--ids", dest="sample_ids", type=int, nargs="+", help="dataset row ids")
    a.add_argument("--n-samples", type=int, default=5, help="test rows to use when --ids is absent")
    a.add_argument("--mode", action="append", choices=pipeline.MODES)
    a.add_argument("--baseline", help="comma separated vector for custom-point")
    a.add_argument("--steps", type=int, default=128)
    a.add_argument("--epsilon", type=float, default=1e-3)
    a.add_argument("--noise-seed", type=int, default=0)
    a.add_argument("--no-figures", action="store_true")
    a.add_argument("--out", help="output directory")
    a.set_defaults(func=cmd_attribute)

    v = sub.add_parser("validate", help="check boundary samples against independent oracles")
    v.add_argument("model")
    v.add_argument("boundary")
    v.add_argument("--dataset", help="enables the manifold check and the grid bounds")
    v.add_argument("--epsilon", type=float, default=1e-3)
    v.add_argument("--grid-resolution", type=int)
    v.add_argument("--out", help="write the checks as JSON")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("report", help="run every stage and write report.json")
    r.add_argument("--config", help="JSON experiment config")
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--seed", type=int, help="global seed")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted config override, e.g. train.epochs=5")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataFormatError, InputShapeError, FileNotFoundError) as exc:
        print(f"ibs: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, IBSError, ValueError) as exc:
        print(f"ibs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
