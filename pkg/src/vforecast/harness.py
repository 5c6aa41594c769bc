"""Experiment orchestration behind the CLI.

A run is described by one JSON config document with nested sections
(dataset, window, render, model, train, eval, out_dir); every CLI flag
mirrors a config key and wins over the file.  The pipeline stages are
dataset generation, training, evaluation, and cross-method reporting;
each stage writes deterministic delimited files (plus a JSON manifest
or report) into its output directory, and the reporting stages render
matplotlib figures alongside.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import figures
from .baselines import numeric_to_image, rw_fit, rw_predict
from .complexity import WpeConfig, wpe
from .divergence import jsd_profile
from .errors import DataError, ParameterError
from .ioumetric import ThresholdRule, image_iou_profile, region_scores
from .nets import (
    NumAEConfig,
    ParamSet,
    VisualAEConfig,
    config_digest,
    input_minmax,
    load_checkpoint,
    minmax_denormalize,
    minmax_normalize,
    num_ae_forward,
    save_checkpoint,
    visual_ae_forward,
)
from .raster import RenderSpec, SeriesImage, WindowSpec, render, window_pair, write_pgm, write_vfim
from .rng import substream
from .seriesgen import DatasetSplit, load_series_csv, make_splits
from .trainer import TrainConfig, train

METHODS = ("visual", "numeric", "randomwalk", "control")

SPLIT_FILES = {"train": "train.csv", "validation": "validation.csv", "test": "test.csv"}


def worker_count() -> int:
    """Worker cap from VFORECAST_THREADS; at least 1."""
    raw = os.environ.get("VFORECAST_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "harmonic"
    generator: str | None = "harmonic"
    csv_dir: str | None = None
    counts: tuple[int, int, int] = (4000, 500, 1000)
    seed: int = 7
    series_len: int = 200
    param_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.generator is None and self.csv_dir is None:
            raise ParameterError("dataset needs a generator or a csv_dir")


@dataclass(frozen=True)
class EvalConfig:
    threshold: str = "relative"
    threshold_fraction: float = 0.2
    rw_mode: str = "mean"
    rw_seed: int = 0

    def rule(self) -> ThresholdRule:
        return ThresholdRule(kind=self.threshold, fraction=self.threshold_fraction)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    window: WindowSpec = WindowSpec()
    render: RenderSpec = RenderSpec()
    model_kind: str = "visual"
    model_seed: int = 0
    model_arch: dict = field(default_factory=dict)  # optional VisualAEConfig overrides
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    out_dir: str = "runs/experiment"

    def __post_init__(self):
        if self.model_kind not in ("visual", "numeric"):
            raise ParameterError(f"model kind must be visual or numeric, got {self.model_kind!r}")
        n_pred = (1.0 - self.window.c) * self.render.width
        if abs(n_pred - round(n_pred)) > 1e-9:
            raise ParameterError(
                f"(1 - c) * width must be integral, got {n_pred} for c={self.window.c}, width={self.render.width}"
            )
        if self.dataset.series_len != self.window.total_len:
            raise ParameterError(
                f"series_len {self.dataset.series_len} must equal input_len + shift = {self.window.total_len}"
            )

    def net_config(self, kind: str | None = None):
        """Architecture for `kind` (default: the configured model kind).

        The optional model.arch section overrides matching config
        fields; keys that do not apply to the requested kind (say,
        channels when building the numeric model) are ignored so one
        experiment config can drive both model families.
        """
        kind = kind or self.model_kind
        cls = VisualAEConfig if kind == "visual" else NumAEConfig
        allowed = {f.name for f in dataclass_fields(cls)}
        arch = {
            k: (tuple(v) if k == "channels" else v)
            for k, v in self.model_arch.items()
            if k in allowed
        }
        if kind == "visual":
            return VisualAEConfig(image_hw=self.render.width, **arch)
        return NumAEConfig(length=self.window.input_len, **arch)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ParameterError(f"config section {name!r} must be an object")
    return dict(value)


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a nested plain dictionary."""
    known = {"dataset", "window", "render", "model", "train", "eval", "out_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    dataset = _section(doc, "dataset")
    window = _section(doc, "window")
    rnd = _section(doc, "render")
    model = _section(doc, "model")
    train_sec = _section(doc, "train")
    eval_sec = _section(doc, "eval")
    try:
        return ExperimentConfig(
            dataset=DatasetConfig(**dataset),
            window=WindowSpec(**window),
            render=RenderSpec(**rnd),
            model_kind=model.get("kind", "visual"),
            model_seed=int(model.get("seed", 0)),
            model_arch=model.get("arch", {}),
            train=TrainConfig(**train_sec),
            eval=EvalConfig(**eval_sec),
            out_dir=doc.get("out_dir", "runs/experiment"),
        )
    except TypeError as exc:
        raise ParameterError(f"bad config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ParameterError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(doc)


def _write_series_csv(path, series_list) -> None:
    with open(path, "w") as fh:
        for series in series_list:
            fh.write(",".join(format(v, ".17g") for v in series.values))
            fh.write("\n")


def _json_dump(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(cfg: ExperimentConfig) -> Path:
    """Generate the dataset splits and write CSVs plus a manifest."""
    ds = cfg.dataset
    if ds.generator is None:
        raise ParameterError("gen needs a synthetic generator dataset config")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = make_splits(ds.generator, ds.counts, ds.seed, ds.series_len, ds.param_overrides)
    _write_series_csv(out / SPLIT_FILES["train"], split.train)
    _write_series_csv(out / SPLIT_FILES["validation"], split.validation)
    _write_series_csv(out / SPLIT_FILES["test"], split.test)
    _json_dump(
        out / "manifest.json",
        {
            "generator": ds.generator,
            "seed": ds.seed,
            "counts": list(ds.counts),
            "series_len": ds.series_len,
            "param_overrides": ds.param_overrides,
        },
    )
    return out


def load_split(data_dir, which: tuple[str, ...] = ("train", "validation", "test"), seed: int = 0) -> DatasetSplit:
    """Load previously generated split CSVs; absent splits load empty."""
    data_dir = Path(data_dir)
    loaded = {}
    for name in ("train", "validation", "test"):
        path = data_dir / SPLIT_FILES[name]
        if name in which:
            if not path.exists():
                raise DataError(f"missing split file: {path}")
            loaded[name] = tuple(load_series_csv(path))
        else:
            loaded[name] = ()
    return DatasetSplit(train=loaded["train"], validation=loaded["validation"], test=loaded["test"], seed=seed)


def checkpoint_name(kind: str, seed: int) -> str:
    return f"checkpoint_{kind}_seed{seed}.vfck"


def cmd_train(cfg: ExperimentConfig, data_dir, log=None, sample_dump_every: int = 0) -> tuple[Path, Path]:
    """Train the configured model on a generated dataset directory."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = load_split(data_dir, which=("train", "validation"))
    train_cfg = replace(cfg.train, seed=cfg.model_seed)
    params, history = train(
        cfg.model_kind,
        cfg.net_config(),
        split,
        train_cfg,
        wspec=cfg.window,
        rspec=cfg.render,
        log=log,
        sample_dump_every=sample_dump_every,
        sample_dump_dir=out if sample_dump_every else None,
    )
    ckpt_path = out / checkpoint_name(cfg.model_kind, cfg.model_seed)
    save_checkpoint(ckpt_path, params)
    history_path = out / f"history_{cfg.model_kind}_seed{cfg.model_seed}.csv"
    history.write_csv(history_path)
    rows = [
        {"epoch": i + 1, "train_loss": history.train_loss[i], "val_loss": history.val_loss[i]}
        for i in range(history.n_epochs())
    ]
    figures.save_training_curves(rows, out / f"history_{cfg.model_kind}_seed{cfg.model_seed}.png")
    return ckpt_path, history_path


def _windows(cfg: ExperimentConfig, test_series) -> dict:
    inputs, targets, input_imgs, target_imgs = [], [], [], []
    for series in test_series:
        inp, tgt = window_pair(series, cfg.window)
        inputs.append(inp)
        targets.append(tgt)
        input_imgs.append(render(inp, cfg.render))
        target_imgs.append(render(tgt, cfg.render))
    return {"inputs": inputs, "targets": targets, "input_imgs": input_imgs, "target_imgs": target_imgs}


def _forecast_images(cfg: ExperimentConfig, method: str, win: dict, params: ParamSet | None) -> list[SeriesImage]:
    inputs, input_imgs, target_imgs = win["inputs"], win["input_imgs"], win["target_imgs"]
    n = len(inputs)
    k, L = cfg.window.shift, cfg.window.input_len
    if method == "control":
        return list(target_imgs)
    if method == "randomwalk":
        preds = []
        for i, inp in enumerate(inputs):
            model = rw_fit(inp, mode=cfg.eval.rw_mode)
            rng = substream(cfg.eval.rw_seed, "randomwalk", i)
            path = rw_predict(model, k, rng)
            preds.append(numeric_to_image(inp, path, cfg.window, cfg.render))
        return preds
    if method == "visual":
        out: list[SeriesImage] = []
        for start in range(0, n, 128):
            out.extend(visual_ae_forward(params, input_imgs[start : start + 128]))
        return out
    # numeric: forecast the normalized target window, keep only the
    # future samples, then rasterize through the shared pipeline
    bounds = [input_minmax(inp.values) for inp in inputs]
    batch = np.stack(
        [minmax_normalize(inp.values, lo, hi) for inp, (lo, hi) in zip(inputs, bounds)]
    )
    outputs = []
    for start in range(0, n, 256):
        outputs.append(num_ae_forward(params, batch[start : start + 256]))
    outputs = np.concatenate(outputs, axis=0)
    preds = []
    for i, inp in enumerate(inputs):
        lo, hi = bounds[i]
        future = minmax_denormalize(outputs[i, L - k :], lo, hi)
        preds.append(numeric_to_image(inp, future, cfg.window, cfg.render))
    return preds


def _example_metrics(args):
    gt, pred, rule, c = args
    profile = image_iou_profile(gt, pred, rule, c=c)
    jsd_cols = jsd_profile(gt.pixels, pred.pixels)
    n_pred = profile.prediction_columns
    split = profile.width - n_pred
    iou_recon, iou_pred = region_scores(profile)
    return {
        "iou_profile": profile.per_column,
        "iou_recon": iou_recon,
        "iou_pred": iou_pred,
        "jsd_recon": float(jsd_cols[:split].mean()),
        "jsd_pred": float(jsd_cols[split:].mean()),
    }


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def cmd_eval(
    cfg: ExperimentConfig,
    data_dir,
    method: str,
    checkpoints: list | None = None,
    report_name: str | None = None,
) -> dict:
    """Evaluate one method on the test split and write report + profile.

    Model methods take one checkpoint per trained seed; scores are
    reported per seed and pooled over all (example, seed) pairs.
    """
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = load_split(data_dir, which=("test",))
    if not split.test:
        raise DataError("test split is empty")
    win = _windows(cfg, split.test)
    rule = cfg.eval.rule()

    if method in ("visual", "numeric"):
        if not checkpoints:
            raise ParameterError(f"method {method} needs at least one checkpoint")
        net_cfg = cfg.net_config(method)
        param_sets = [(Path(p).stem, load_checkpoint(p, net_cfg)) for p in checkpoints]
        digest = config_digest(net_cfg).hex()
    else:
        param_sets = [(method, None)]
        digest = None

    per_seed = []
    pooled = {"iou_recon": [], "iou_pred": [], "jsd_recon": [], "jsd_pred": []}
    profile_sum = np.zeros(cfg.render.width)
    n_profiles = 0
    workers = worker_count()

    for label, params in param_sets:
        preds = _forecast_images(cfg, method, win, params)
        tasks = [(gt, pred, rule, cfg.window.c) for gt, pred in zip(win["target_imgs"], preds)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_example_metrics, tasks))
        else:
            results = [_example_metrics(t) for t in tasks]
        seed_stats = {}
        for key in ("iou_recon", "iou_pred", "jsd_recon", "jsd_pred"):
            values = [r[key] for r in results]
            pooled[key].extend(values)
            mean, std = _mean_std(values)
            seed_stats[f"{key}_mean"] = mean
            seed_stats[f"{key}_std"] = std
        per_seed.append({"label": label, **seed_stats})
        profile_sum += np.sum([r["iou_profile"] for r in results], axis=0)
        n_profiles += len(results)

    profile_mean = profile_sum / n_profiles
    n_pred_cols = round((1.0 - cfg.window.c) * cfg.render.width)
    pred_profile = profile_mean[cfg.render.width - n_pred_cols :]

    iou_recon = _mean_std(pooled["iou_recon"])
    iou_pred = _mean_std(pooled["iou_pred"])
    jsd_recon = _mean_std(pooled["jsd_recon"])
    jsd_pred = _mean_std(pooled["jsd_pred"])
    report = {
        "dataset": cfg.dataset.name,
        "method": method,
        "recon_mean": iou_recon[0],
        "recon_std": iou_recon[1],
        "pred_mean": iou_pred[0],
        "pred_std": iou_pred[1],
        "iou": {
            "recon_mean": iou_recon[0],
            "recon_std": iou_recon[1],
            "pred_mean": iou_pred[0],
            "pred_std": iou_pred[1],
        },
        "jsd": {
            "recon_mean": jsd_recon[0],
            "recon_std": jsd_recon[1],
            "pred_mean": jsd_pred[0],
            "pred_std": jsd_pred[1],
        },
        "per_seed": per_seed,
        "profile": {
            "columns": list(range(n_pred_cols)),
            "iou_mean": [float(v) for v in pred_profile],
        },
        "meta": {
            "n_examples": len(split.test),
            "n_seeds": len(param_sets),
            "c": cfg.window.c,
            "width": cfg.render.width,
            "height": cfg.render.height,
            "threshold": {"kind": cfg.eval.threshold, "fraction": cfg.eval.threshold_fraction},
            "rw_mode": cfg.eval.rw_mode,
            "checkpoints": [label for label, _ in param_sets],
            "config_digest": digest,
            "data_seed": cfg.dataset.seed,
        },
    }
    stem = report_name or f"report_{cfg.dataset.name}_{method}"
    _json_dump(out / f"{stem}.json", report)
    with open(out / f"{stem}_profile.csv", "w") as fh:
        fh.write("column_index,iou\n")
        for i, v in enumerate(pred_profile):
            fh.write(f"{i},{v:.17g}\n")
    return report


def cmd_report(report_paths, out_dir, force: bool = False) -> list[dict]:
    """Merge eval reports into a comparison table and IoU profile curves."""
    if not report_paths:
        raise ParameterError("report needs at least one eval report")
    reports = []
    for path in report_paths:
        if not Path(path).exists():
            raise DataError(f"no such report: {path}")
        with open(path) as fh:
            reports.append(json.load(fh))
    ref = reports[0]["meta"]
    for rep in reports[1:]:
        meta = rep["meta"]
        mismatched = [k for k in ("c", "width", "threshold") if meta.get(k) != ref.get(k)]
        if mismatched and not force:
            raise ParameterError(
                f"report {rep['dataset']}/{rep['method']} differs in {mismatched}; rerun with --force to merge"
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports.sort(key=lambda r: (r["dataset"], -r["pred_mean"]))

    columns = (
        "dataset",
        "method",
        "iou_pred",
        "iou_recon",
        "jsd_pred",
        "jsd_recon",
    )
    rows = []
    for rep in reports:
        rows.append(
            {
                "dataset": rep["dataset"],
                "method": rep["method"],
                "iou_pred": f"{rep['pred_mean']:.3f}±{rep['pred_std']:.3f}",
                "iou_recon": f"{rep['recon_mean']:.3f}±{rep['recon_std']:.3f}",
                "jsd_pred": f"{rep['jsd']['pred_mean']:.3f}±{rep['jsd']['pred_std']:.3f}",
                "jsd_recon": f"{rep['jsd']['recon_mean']:.3f}±{rep['jsd']['recon_std']:.3f}",
            }
        )

    with open(out / "comparison.csv", "w") as fh:
        fh.write(
            "dataset,method,iou_pred_mean,iou_pred_std,iou_recon_mean,iou_recon_std,"
            "jsd_pred_mean,jsd_pred_std,jsd_recon_mean,jsd_recon_std\n"
        )
        for rep in reports:
            fh.write(
                f"{rep['dataset']},{rep['method']},"
                f"{rep['pred_mean']:.17g},{rep['pred_std']:.17g},"
                f"{rep['recon_mean']:.17g},{rep['recon_std']:.17g},"
                f"{rep['jsd']['pred_mean']:.17g},{rep['jsd']['pred_std']:.17g},"
                f"{rep['jsd']['recon_mean']:.17g},{rep['jsd']['recon_std']:.17g}\n"
            )

    widths = {c: max(len(c), max((len(str(r[c])) for r in rows), default=0)) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    for row in rows:
        lines.append("  ".join(str(row[c]).ljust(widths[c]) for c in columns))
    table = "\n".join(lines) + "\n"
    with open(out / "comparison.txt", "w") as fh:
        fh.write(table)

    curves = {}
    for rep in reports:
        label = f"{rep['dataset']}/{rep['method']}"
        x = np.asarray(rep["profile"]["columns"])
        y = np.asarray(rep["profile"]["iou_mean"])
        curves[label] = (x, y)
    with open(out / "profiles.csv", "w") as fh:
        labels = list(curves)
        fh.write("column_index," + ",".join(labels) + "\n")
        n_cols = max(len(curves[l][0]) for l in labels)
        for i in range(n_cols):
            cells = [str(i)]
            for l in labels:
                y = curves[l][1]
                cells.append(f"{y[i]:.17g}" if i < len(y) else "")
            fh.write(",".join(cells) + "\n")
    figures.save_iou_profiles(curves, out / "profiles.png", title="prediction-region IoU")
    return reports


def cmd_predict(
    cfg: ExperimentConfig,
    data_dir,
    method: str,
    index: int = 0,
    checkpoint=None,
) -> Path:
    """Forecast one test example and dump images plus a figure panel."""
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = load_split(data_dir, which=("test",))
    if not (0 <= index < len(split.test)):
        raise DataError(f"test index {index} out of range [0, {len(split.test)})")
    win = _windows(cfg, [split.test[index]])
    params = None
    if method in ("visual", "numeric"):
        if checkpoint is None:
            raise ParameterError(f"method {method} needs a checkpoint")
        params = load_checkpoint(checkpoint, cfg.net_config(method))
    pred = _forecast_images(cfg, method, win, params)[0]
    write_pgm(out / f"predict_{index}_input.pgm", win["input_imgs"][0])
    write_pgm(out / f"predict_{index}_target.pgm", win["target_imgs"][0])
    write_pgm(out / f"predict_{index}_{method}.pgm", pred)
    write_vfim(out / f"predict_{index}_{method}.vfim", pred)
    figures.save_prediction_panel(
        win["input_imgs"][0],
        win["target_imgs"][0],
        pred,
        out / f"predict_{index}_{method}.png",
        method=method,
    )
    return out


def cmd_wpe(csv_path, out_dir, bins: int = 20, label: str | None = None) -> Path:
    """Per-series complexity CSV plus histogram CSV and figure."""
    series_list = load_series_csv(csv_path)
    values = np.array([wpe(s, WpeConfig()) for s in series_list])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = label or Path(csv_path).stem
    with open(out / f"wpe_{name}.csv", "w") as fh:
        fh.write("series_index,wpe\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{v:.17g}\n")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    with open(out / f"wpe_{name}_hist.csv", "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for i in range(bins):
            fh.write(f"{edges[i]:.17g},{edges[i + 1]:.17g},{counts[i]}\n")
    figures.save_wpe_histogram({name: values}, edges, out / f"wpe_{name}_hist.png")
    return out


def cmd_rasterize(
    csv_path,
    out_dir,
    rspec: RenderSpec = RenderSpec(),
    wspec: WindowSpec | None = None,
    fmt: str = "both",
    limit: int | None = None,
) -> Path:
    """Render CSV series (whole, or as window pairs) to PGM/VFIM files."""
    if fmt not in ("pgm", "vfim", "both"):
        raise ParameterError(f"format must be pgm, vfim, or both, got {fmt!r}")
    series_list = load_series_csv(csv_path)
    if limit is not None:
        series_list = series_list[:limit]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def emit(stem: str, image: SeriesImage) -> None:
        if fmt in ("pgm", "both"):
            write_pgm(out / f"{stem}.pgm", image)
        if fmt in ("vfim", "both"):
            write_vfim(out / f"{stem}.vfim", image)

    for i, series in enumerate(series_list):
        if wspec is None:
            emit(f"series_{i:05d}", render(series, rspec))
        else:
            inp, tgt = window_pair(series, wspec)
            emit(f"series_{i:05d}_input", render(inp, rspec))
            emit(f"series_{i:05d}_target", render(tgt, rspec))
    return out
