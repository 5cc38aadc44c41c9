"""File-level stages of an experiment and the end-to-end report.

Each stage reads and writes the formats owned by the other modules, so the
CLI subcommands are thin wrappers around these functions. ``run_report``
chains all of them under one output directory and derives every stage seed
from a single global seed.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import plots
from .attribution import (attribution_summary, gradient_along_path, integrated_gradients,
                          write_attribution_csv)
from .datagen import (Dataset, load_layout, make_dataset, read_dataset_csv, save_layout,
                      split_indices, write_dataset_csv)
from .errors import ConfigurationError, InputShapeError
from .nn import (NetworkSpec, TrainConfig, TrainedModel, load_model, predict_proba, save_model,
                 train)
from .oracle import (count_crossings, default_bounds, grid_boundary, manifold_closeness,
                     write_oracle_csv)
from .search import (BoundarySample, SearchConfig, orthogonality, read_boundary_csv,
                     sample_boundary, select_baseline, write_boundary_csv)

log = logging.getLogger(__name__)

OUTPUT_ENV = "IBS_OUTPUT_DIR"
MODES = ("optimal", "random-db", "zero", "noise", "custom-point")
NEGATIVE_TOL = 1e-6
MANIFOLD_MIN_FRACTION = 0.95


def stage_seed(global_seed: int, stage: str) -> int:
    """Independent 32-bit seed for a named stage of a run."""
    ss = np.random.SeedSequence([int(global_seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


def dump_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def layout_stem(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + "_layout")


# ---------------------------------------------------------------------------
# stages


def generate(preset: str, seed: int, out, **overrides):
    """Write a preset dataset to ``out`` (CSV); brain also gets a layout image and sidecar."""
    dataset, layout = make_dataset(preset, seed, **overrides)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    files = [write_dataset_csv(dataset, out)]
    if layout is not None:
        files.extend(save_layout(layout, layout_stem(out)))
    return dataset, layout, files


def load_dataset_layout(dataset_path):
    side = layout_stem(dataset_path).with_suffix(".json")
    return load_layout(side) if side.exists() else None


def train_file(dataset_path, model_out, config: TrainConfig = TrainConfig(), hidden=(10,) * 5):
    dataset = read_dataset_csv(dataset_path)
    model, metrics = train(NetworkSpec.mlp(dataset.n_features, tuple(hidden)), dataset, config)
    model_out = Path(model_out)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_out)
    dump_json(metrics, metrics_path(model_out))
    return model, metrics


def metrics_path(model_path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + "_metrics.json")


def training_split(model: TrainedModel, dataset: Dataset):
    """Recreate the train/test split recorded in the model's metadata."""
    if dataset.n_features != model.n_inputs:
        raise InputShapeError(f"dataset has {dataset.n_features} features, model expects {model.n_inputs}")
    frac = model.metadata.get("split_fraction", TrainConfig.split_fraction)
    seed = model.metadata.get("split_seed", model.train_seed)
    return split_indices(dataset.n_samples, frac, seed)


def boundary(model: TrainedModel, dataset: Dataset, n: int, config: SearchConfig = SearchConfig()):
    """IBS from ``n`` training-split starts; also returns the manifold statistic."""
    tr, _ = training_split(model, dataset)
    train_ds = dataset.subset(tr)
    bset = sample_boundary(model, train_ds, n, config)
    stats = {
        "n_started": bset.n_started,
        "n_converged": len(bset.samples),
        "n_failed": bset.n_failed,
        "convergence_rate": bset.convergence_rate,
        "epsilon": config.epsilon,
        "gamma": config.gamma,
        "max_steps": config.max_steps,
    }
    if bset.samples:
        mc = manifold_closeness(bset.points, train_ds.features)
        stats.update(manifold_fraction=mc.fraction_within, manifold_threshold=mc.threshold,
                     manifold_percentile=mc.percentile,
                     median_steps=float(np.median([s.steps_taken for s in bset.samples])))
    return bset, stats


def boundary_file(model_path, dataset_path, n, config: SearchConfig, out):
    model = load_model(model_path)
    dataset = read_dataset_csv(dataset_path)
    bset, stats = boundary(model, dataset, n, config)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_boundary_csv(bset.samples + bset.failures, out)
    dump_json(stats, out.with_name(out.stem + "_stats.json"))
    return bset, stats


def _baseline_for(mode, x, model, db_points, rng, train_features, custom_point, epsilon):
    if mode in ("optimal", "random-db"):
        if db_points is None or len(db_points) == 0:
            raise ConfigurationError(f"mode {mode!r} needs converged boundary samples")
        rule = "closest" if mode == "optimal" else "farthest"
        sel = select_baseline(x, db_points, model, rule, epsilon=epsilon, refine=(mode == "optimal"))
        return sel.baseline, {
            "baseline_id": sel.index, "distance": sel.distance, "crossings": sel.crossings,
            "crossing_ts": list(sel.crossing_ts), "orthogonality": sel.orthogonality,
            "rank_pool_size": sel.rank_pool_size, "refined": sel.refined,
        }
    if mode == "zero":
        b = np.zeros_like(x)
    elif mode == "noise":
        mu, sd = train_features.mean(axis=0), train_features.std(axis=0)
        b = mu + sd * rng.standard_normal(x.shape)
    elif mode == "custom-point":
        if custom_point is None:
            raise ConfigurationError("mode 'custom-point' needs a baseline vector")
        b = np.asarray(custom_point, dtype=float)
        if b.shape != x.shape:
            raise InputShapeError(f"custom baseline has {b.size} values, model expects {x.size}")
    else:
        raise ConfigurationError(f"unknown mode {mode!r}; choose from {MODES}")
    rep = count_crossings(model, b, x, epsilon=epsilon)
    return b, {
        "baseline_id": mode, "distance": float(np.linalg.norm(x - b)), "crossings": rep.count,
        "crossing_ts": list(rep.crossing_ts), "orthogonality": orthogonality(model, b, x),
        "rank_pool_size": 1, "refined": False,
    }


def attribute(model: TrainedModel, dataset: Dataset, db_samples, sample_ids, modes, out_dir,
              steps: int = 128, layout=None, custom_point=None, noise_seed: int = 0,
              epsilon: float = 1e-3, figures=True):
    """IG for each sample id against each baseline mode.

    Attributions explain the class the model predicts for the sample. Writes
    one CSV (plus JSON summary) per sample and mode, ``selections.json`` with
    every record and, for the first ``figures`` samples, SVG plots. Returns
    ``(records, files)``.
    """
    out_dir = Path(out_dir)
    (out_dir / "attributions").mkdir(parents=True, exist_ok=True)
    n_fig = len(sample_ids) if figures is True else int(figures or 0)
    if n_fig:
        (out_dir / "figures").mkdir(parents=True, exist_ok=True)
    for sid in sample_ids:
        if not 0 <= int(sid) < dataset.n_samples:
            raise ConfigurationError(f"unknown sample id {sid} (dataset has {dataset.n_samples} rows)")
    db_points = None
    if db_samples is not None:
        conv = [s.point for s in db_samples if getattr(s, "converged", True)]
        db_points = np.array(conv) if conv else None
    tr, _ = training_split(model, dataset)
    train_features = dataset.features[tr]
    records, files = [], []
    for k, sid in enumerate(sample_ids):
        sid = int(sid)
        x = dataset.features[sid]
        fx = predict_proba(model, x)
        target = int(fx > 0.5)
        attrs, traces, crossings, baselines = {}, {}, {}, {}
        for mode in modes:
            rng = np.random.default_rng([noise_seed, sid])
            b, info = _baseline_for(mode, x, model, db_points, rng, train_features, custom_point, epsilon)
            a = integrated_gradients(model, x, b, steps, target)
            stem = out_dir / "attributions" / f"sample_{sid:05d}_{mode}"
            files.extend(write_attribution_csv(a, stem.with_suffix(".csv"), info["baseline_id"]))
            records.append({
                "sample_id": sid, "label": int(dataset.labels[sid]), "prediction": fx,
                "target": target, "mode": mode, "baseline": b.tolist(),
                "baseline_prediction": predict_proba(model, b), **info,
                "attribution": attribution_summary(a, info["baseline_id"]),
                "all_nonnegative": bool(np.all(a.values >= -NEGATIVE_TOL)),
            })
            attrs[mode], baselines[mode], crossings[mode] = a, b, info["crossing_ts"]
            traces[mode] = gradient_along_path(model, b, x, 101, target)
        if k < n_fig:
            fig = out_dir / "figures" / f"sample_{sid:05d}"
            title = f"sample {sid} (class {target})"
            files.append(plots.gradient_path(traces, f"{fig}_path.svg", crossings, title))
            if layout is not None:
                files.append(plots.attribution_maps(attrs, layout, f"{fig}_maps.svg", title))
            else:
                files.append(plots.attribution_bars(attrs, f"{fig}_bars.svg", title))
            if model.n_inputs == 2:
                files.append(plots.boundary_scatter(
                    train_features, dataset.labels[tr], f"{fig}_scatter.svg",
                    boundary_points=db_points, baselines=baselines, sample=x, title=title))
    files.append(dump_json(records, out_dir / "selections.json"))
    return records, files


def attribution_stats(records) -> dict:
    """Aggregate per-mode sign and completeness statistics over attribute() records."""
    out = {}
    for mode in sorted({r["mode"] for r in records}):
        rs = [r for r in records if r["mode"] == mode]
        n_feat = len(rs[0]["baseline"])
        hist = {}
        for r in rs:
            hist[str(r["crossings"])] = hist.get(str(r["crossings"]), 0) + 1
        res = [r["attribution"]["completeness_residual"] for r in rs]
        out[mode] = {
            "n_samples": len(rs),
            "sign_consistency_rate": float(np.mean([r["all_nonnegative"] for r in rs])),
            "negative_component_fraction": float(
                sum(r["attribution"]["n_negative"] for r in rs) / (len(rs) * n_feat)),
            "completeness_residual_max": float(np.max(res)),
            "completeness_residual_mean": float(np.mean(res)),
            "crossing_histogram": dict(sorted(hist.items(), key=lambda kv: int(kv[0]))),
        }
    return out


def validate(model: TrainedModel, samples, train_features=None, epsilon: float = 1e-3,
             grid_resolution=None, oracle_out=None) -> dict:
    """Grid-oracle agreement (2-D/3-D), neutrality and manifold closeness of boundary samples.

    Each check reports ``status`` as pass, fail or skipped.
    """
    pts = np.array([s.point for s in samples if getattr(s, "converged", True)])
    checks = {}
    if pts.size == 0:
        return {"neutrality": {"status": "fail", "reason": "no converged boundary samples"}}
    preds = predict_proba(model, pts)
    dev = np.abs(preds - 0.5)
    checks["neutrality"] = {
        "status": "pass" if np.all(dev <= epsilon) else "fail",
        "max_deviation": float(dev.max()), "epsilon": epsilon,
        "fraction_neutral": float(np.mean(dev <= epsilon)),
    }
    if model.n_inputs in (2, 3):
        ref = train_features if train_features is not None else pts
        oracle = grid_boundary(model, default_bounds(ref), grid_resolution)
        d = oracle.nearest_distance(pts)
        tol = 2.0 * oracle.max_spacing
        frac = float(np.mean(d <= tol))
        checks["grid_agreement"] = {
            "status": "pass" if frac == 1.0 else "fail", "fraction_within": frac,
            "tolerance": tol, "max_distance": float(d.max()), "resolution": oracle.resolution,
            "n_oracle_points": int(len(oracle.boundary_points)),
        }
        if oracle_out is not None:
            write_oracle_csv(oracle, oracle_out)
    else:
        checks["grid_agreement"] = {"status": "skipped", "reason": f"{model.n_inputs}-D input"}
    if train_features is not None:
        mc = manifold_closeness(pts, train_features)
        checks["manifold_closeness"] = {
            "status": "pass" if mc.fraction_within >= MANIFOLD_MIN_FRACTION else "fail",
            "fraction_within": mc.fraction_within, "threshold": mc.threshold,
            "percentile": mc.percentile, "required_fraction": MANIFOLD_MIN_FRACTION,
        }
    else:
        checks["manifold_closeness"] = {"status": "skipped", "reason": "no dataset given"}
    return checks


# ---------------------------------------------------------------------------
# end-to-end


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    dataset_overrides: dict = field(default_factory=dict)
    dataset_seed: int | None = None
    hidden_layers: tuple = (10, 10, 10, 10, 10)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    n_boundary: int = 1000
    attribution_steps: int = 128
    n_attribute: int = 20
    n_figures: int = 3
    grid_resolution: int | None = None
    output_dir: str = "ibs-output"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Build from the nested JSON layout; unset stage seeds come from ``seed``."""
        d = dict(d)
        known = {"dataset", "network", "train", "search", "boundary", "attribution", "validate",
                 "output_dir", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        seed = int(d.get("seed", 0))
        ds = dict(d.get("dataset", {}))
        tr = dict(d.get("train", {}))
        se = dict(d.get("search", {}))
        tr.setdefault("seed", stage_seed(seed, "train"))
        se.setdefault("pool_seed", stage_seed(seed, "search"))
        try:
            return cls(
                preset=ds.get("preset", "custom"),
                dataset_overrides=dict(ds.get("overrides", {})),
                dataset_seed=int(ds.get("seed", stage_seed(seed, "dataset"))),
                hidden_layers=tuple(d.get("network", {}).get("hidden", (10,) * 5)),
                train=TrainConfig(**tr),
                search=SearchConfig(**se),
                n_boundary=int(d.get("boundary", {}).get("n_starts", 1000)),
                attribution_steps=int(d.get("attribution", {}).get("steps", 128)),
                n_attribute=int(d.get("attribution", {}).get("n_samples", 20)),
                n_figures=int(d.get("attribution", {}).get("n_figures", 3)),
                grid_resolution=d.get("validate", {}).get("grid_resolution"),
                output_dir=str(d.get("output_dir", "ibs-output")),
                seed=seed,
            )
        except TypeError as exc:
            raise ConfigurationError(f"bad config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "dataset": {"preset": self.preset, "overrides": self.dataset_overrides,
                        "seed": self.dataset_seed},
            "network": {"hidden": list(self.hidden_layers)},
            "train": asdict(self.train),
            "search": asdict(self.search),
            "boundary": {"n_starts": self.n_boundary},
            "attribution": {"steps": self.attribution_steps, "n_samples": self.n_attribute,
                            "n_figures": self.n_figures},
            "validate": {"grid_resolution": self.grid_resolution},
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(d)


def run_report(config: ExperimentConfig, output_dir=None) -> dict:
    """Run generate, train, boundary, attribute and validate; write ``report.json``.

    The report lists every written file relative to the output directory.
    Nothing time-dependent is recorded, so equal configs give equal bytes.
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dseed = config.dataset_seed if config.dataset_seed is not None else stage_seed(config.seed, "dataset")
    files = [dump_json(config.to_dict(), out / "config.json")]

    data_path = out / f"{config.preset}.csv"
    dataset, layout, written = generate(config.preset, dseed, data_path, **config.dataset_overrides)
    files += written
    log.info("generated %s: %d x %d", config.preset, dataset.n_samples, dataset.n_features)

    model, metrics = train(NetworkSpec.mlp(dataset.n_features, config.hidden_layers), dataset,
                           config.train)
    files.append(save_model(model, out / "model.json"))
    files.append(dump_json(metrics, out / "model_metrics.json"))
    log.info("trained: accuracy %.4f f1 %.4f", metrics["accuracy"], metrics["f1"])

    bset, bstats = boundary(model, dataset, config.n_boundary, config.search)
    files.append(write_boundary_csv(bset.samples + bset.failures, out / "boundary.csv"))
    log.info("boundary: %d/%d converged", len(bset.samples), bset.n_started)

    tr, te = training_split(model, dataset)
    checks = validate(model, bset.samples, dataset.features[tr], config.search.epsilon,
                      config.grid_resolution,
                      oracle_out=out / "oracle.csv" if dataset.n_features in (2, 3) else None)
    if dataset.n_features in (2, 3):
        files.append(out / "oracle.csv")
    files.append(dump_json(checks, out / "validation.json"))

    ids = te[: config.n_attribute].tolist()
    records, afiles = attribute(model, dataset, bset.samples, ids, ("optimal", "random-db"), out,
                                config.attribution_steps, layout,
                                noise_seed=stage_seed(config.seed, "noise"),
                                epsilon=config.search.epsilon, figures=config.n_figures)
    files += afiles
    astats = attribution_stats(records)
    if dataset.n_features == 2:
        (out / "figures").mkdir(exist_ok=True)
        files.append(plots.boundary_scatter(
            dataset.features[tr], dataset.labels[tr], out / "figures" / "boundary.svg",
            boundary_points=bset.points, title=f"{config.preset}: IBS boundary"))

    report = {
        "preset": config.preset,
        "seed": config.seed,
        "metrics": {"accuracy": metrics["accuracy"], "f1": metrics["f1"]},
        "boundary": bstats,
        "attribution": astats,
        "validation": {k: v["status"] for k, v in checks.items()},
        "files": sorted({str(Path(f).relative_to(out)) for f in files} | {"report.json"}),
    }
    dump_json(report, out / "report.json")
    return report
