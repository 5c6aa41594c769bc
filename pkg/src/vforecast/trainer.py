"""SGD training loop with plateau-driven learning-rate decay and early stop.

One validation pass runs after every training epoch.  Improvement means
the validation loss drops below the best seen so far by more than a
small tolerance.  Both the decay and the stopping rule watch the same
streak of consecutive non-improving validation epochs: the learning
rate shrinks by the decay factor each time the streak reaches another
multiple of the decay patience (never below the floor), and training
stops when the streak reaches the stopping patience.  The parameters
returned are those of the best validation epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DataError, NumericError, ParameterError
from .nets import (
    AEConfig,
    ParamSet,
    build_module,
    columnwise_jsd_loss,
    huber_loss,
    input_minmax,
    minmax_normalize,
    module_from_params,
    params_from_module,
)
from .raster import RenderSpec, WindowSpec, render, window_pair
from .rng import substream
from .seriesgen import DatasetSplit

IMPROVEMENT_TOL = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    lr_init left as None picks the conventional starting rate for the
    model family: 0.1 for the image model, 0.01 for the numeric one.
    """

    batch_size: int = 128
    lr_init: float | None = None
    lr_decay_factor: float = 0.1
    lr_floor: float = 1e-4
    lr_patience: int = 5
    early_stop_patience: int = 15
    max_epochs: int = 200
    seed: int = 0
    # plain SGD: at the conventional starting rates, momentum 0.9 makes
    # the column-summed divergence loss oscillate instead of descend
    momentum: float = 0.0
    huber_delta: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ParameterError("batch_size and max_epochs must be positive")
        if not 0 < self.lr_decay_factor < 1:
            raise ParameterError("decay factor must be in (0, 1)")
        if self.lr_init is not None and not (0 < self.lr_floor <= self.lr_init):
            raise ParameterError("need 0 < lr_floor <= lr_init")
        if self.lr_floor <= 0:
            raise ParameterError("lr_floor must be positive")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ParameterError("patience values must be >= 1")

    def resolve_lr(self, kind: str) -> float:
        if self.lr_init is not None:
            return self.lr_init
        return 0.1 if kind == "visual" else 0.01


@dataclass
class TrainHistory:
    """Per-epoch record of one training run."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    stopped_early: bool = False

    def n_epochs(self) -> int:
        return len(self.val_loss)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,lr,seconds\n")
            for i in range(self.n_epochs()):
                fh.write(
                    f"{i + 1},{self.train_loss[i]:.17g},{self.val_loss[i]:.17g},"
                    f"{self.lr[i]:.17g},{self.seconds[i]:.3f}\n"
                )


class PlateauSchedule:
    """The decay/stop state machine, factored out so it can be driven
    with synthetic loss sequences."""

    def __init__(self, config: TrainConfig, kind: str = "visual"):
        self.config = config
        self.lr = config.resolve_lr(kind)
        self.best = math.inf
        self.best_epoch = 0
        self.streak = 0
        self.epoch = 0

    def update(self, val_loss: float) -> bool:
        """Feed one validation loss; returns True when training should stop.

        self.lr afterwards is the rate for the next epoch.
        """
        self.epoch += 1
        if val_loss < self.best - IMPROVEMENT_TOL:
            self.best = val_loss
            self.best_epoch = self.epoch
            self.streak = 0
            return False
        self.streak += 1
        if self.streak >= self.config.early_stop_patience:
            return True
        if self.streak % self.config.lr_patience == 0:
            self.lr = max(self.lr * self.config.lr_decay_factor, self.config.lr_floor)
        return False


def prepare_visual_arrays(
    series_list, wspec: WindowSpec, rspec: RenderSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Window and rasterize a series collection into (inputs, targets),
    both (N, 1, H, W) float32, each window drawn against its own bounds."""
    xs, ys = [], []
    for series in series_list:
        inp, tgt = window_pair(series, wspec)
        xs.append(render(inp, rspec).pixels)
        ys.append(render(tgt, rspec).pixels)
    x = np.asarray(xs, dtype=np.float32)[:, None]
    y = np.asarray(ys, dtype=np.float32)[:, None]
    return x, y


def prepare_numeric_arrays(series_list, wspec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Window a series collection into min-max normalized (inputs, targets),
    both (N, T); the bounds come from each input window only."""
    xs, ys = [], []
    for series in series_list:
        inp, tgt = window_pair(series, wspec)
        lo, hi = input_minmax(inp.values)
        xs.append(minmax_normalize(inp.values, lo, hi))
        ys.append(minmax_normalize(tgt.values, lo, hi))
    return np.asarray(xs, dtype=np.float32), np.asarray(ys, dtype=np.float32)


def _loss_fn(kind: str, config: TrainConfig):
    if kind == "visual":
        return lambda target, out: columnwise_jsd_loss(target, out)
    return lambda target, out: huber_loss(target, out, delta=config.huber_delta)


def evaluate_epoch(module_or_params, inputs: np.ndarray, targets: np.ndarray, loss_fn=None, kind=None) -> float:
    """Mean per-example loss over a validation set, in inference mode.

    Independent of how the set is batched: per-batch sums are combined
    into one mean over examples.
    """
    if isinstance(module_or_params, ParamSet):
        module = module_from_params(module_or_params)
        kind = module_or_params.kind
    else:
        module = module_or_params
    if loss_fn is None:
        loss_fn = _loss_fn(kind, TrainConfig())
    module.eval()
    dtype = next(module.parameters()).dtype
    np_dtype = np.float64 if dtype == torch.float64 else np.float32
    n = inputs.shape[0]
    if n == 0:
        raise DataError("validation set is empty")
    total = 0.0
    with torch.no_grad():
        for start in range(0, n, 256):
            xb = torch.from_numpy(np.asarray(inputs[start : start + 256], dtype=np_dtype))
            yb = torch.from_numpy(np.asarray(targets[start : start + 256], dtype=np_dtype))
            batch_mean = loss_fn(yb, module(xb)).item()
            total += batch_mean * xb.shape[0]
    return total / n


def train(
    kind: str,
    net_config: AEConfig,
    split: DatasetSplit,
    config: TrainConfig,
    wspec: WindowSpec = WindowSpec(),
    rspec: RenderSpec = RenderSpec(),
    log=None,
    sample_dump_every: int = 0,
    sample_dump_dir=None,
) -> tuple[ParamSet, TrainHistory]:
    """Train a forecaster on a dataset split; returns best params + history.

    Initialization, batch shuffling, and therefore the whole run are
    determined by config.seed.  A non-finite training loss aborts with a
    NumericError naming the epoch and batch.
    """
    if kind not in ("visual", "numeric"):
        raise ParameterError(f"unknown model kind {kind!r}")
    if not split.train or not split.validation:
        raise DataError("training needs non-empty train and validation splits")

    if kind == "visual":
        train_x, train_y = prepare_visual_arrays(split.train, wspec, rspec)
        val_x, val_y = prepare_visual_arrays(split.validation, wspec, rspec)
    else:
        train_x, train_y = prepare_numeric_arrays(split.train, wspec)
        val_x, val_y = prepare_numeric_arrays(split.validation, wspec)

    torch.manual_seed(config.seed)
    module = build_module(net_config)
    loss_fn = _loss_fn(kind, config)
    optimizer = torch.optim.SGD(
        module.parameters(), lr=config.resolve_lr(kind), momentum=config.momentum
    )

    schedule = PlateauSchedule(config, kind)
    history = TrainHistory()
    best_params = params_from_module(net_config, module)
    n = train_x.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        lr_used = schedule.lr
        for group in optimizer.param_groups:
            group["lr"] = lr_used

        module.train()
        perm = substream(config.seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            sel = perm[start : start + config.batch_size]
            xb = torch.from_numpy(train_x[sel])
            yb = torch.from_numpy(train_y[sel])
            optimizer.zero_grad(set_to_none=True)
            loss = loss_fn(yb, module(xb))
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {batch_idx}")
            loss.backward()
            optimizer.step()
            epoch_loss += value * len(sel)

        val = evaluate_epoch(module, val_x, val_y, loss_fn=loss_fn)
        if not math.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")

        stop = schedule.update(val)
        if schedule.best_epoch == epoch:
            best_params = params_from_module(net_config, module)

        history.train_loss.append(epoch_loss / n)
        history.val_loss.append(val)
        history.lr.append(lr_used)
        history.seconds.append(time.perf_counter() - t0)
        history.best_epoch = schedule.best_epoch

        if log is not None:
            log(
                f"epoch {epoch:3d}  train {epoch_loss / n:.5f}  val {val:.5f}  "
                f"lr {lr_used:.4g}  streak {schedule.streak}"
            )
        if sample_dump_every and sample_dump_dir is not None and epoch % sample_dump_every == 0:
            _dump_sample(module, kind, val_x, sample_dump_dir, epoch)
        if stop:
            history.stopped_early = True
            break

    return best_params, history


def _dump_sample(module, kind: str, val_x: np.ndarray, out_dir, epoch: int) -> None:
    from pathlib import Path

    from .nets import column_softmax_np
    from .raster import SeriesImage, write_pgm

    if kind != "visual" or val_x.shape[0] == 0:
        return
    module.eval()
    with torch.no_grad():
        logits = module(torch.from_numpy(val_x[:1])).numpy()
    probs = column_softmax_np(logits.astype(np.float64))[0, 0]
    img = SeriesImage(probs, 0.0, 1.0, 0.0, float(probs.shape[1]))
    write_pgm(Path(out_dir) / f"sample_epoch{epoch:04d}.pgm", img)
