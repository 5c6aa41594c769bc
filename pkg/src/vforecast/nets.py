"""The image and numeric convolutional autoencoders.

Both forecasters share one recipe: a short stack of stride-2
convolutions compresses the input, a fully connected bottleneck forms
an undercomplete embedding, and a mirrored stack of stride-2 transposed
convolutions expands back to the input size.  The image model maps a
64x64 column-stochastic image to a forecast image of the same shape and
ends in a per-column softmax so its output columns are probability
distributions; the numeric model maps a min-max normalized series to a
series and ends linearly.

Parameters live in a ParamSet: an ordered name-to-array mapping whose
order (trainable parameters first, then normalization running
statistics) defines the checkpoint layout.  torch supplies the tensor
ops and autograd; the architecture, initialization seeding, losses, and
file format are defined here.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError, ParameterError
from .raster import SeriesImage

VFCK_MAGIC = b"VFCK"
VFCK_VERSION = 1

_ORDERS = ("conv_bn_relu", "conv_relu_bn")


@dataclass(frozen=True)
class VisualAEConfig:
    """Geometry of the image-to-image autoencoder.

    Three stride-2 stages take 1 channel to `channels` while the
    spatial side shrinks 64 -> 32 -> 16 -> 8; a linear layer maps the
    flattened 8x8x512 block to the embedding and the decoder mirrors
    the path with resolution-doubling transposed convolutions.  The
    embedding must stay smaller than the pixel count (undercomplete).
    """

    image_hw: int = 64
    channels: tuple[int, ...] = (128, 256, 512)
    kernel: int = 5
    stride: int = 2
    padding: int = 2
    embedding: int = 512
    order: str = "conv_bn_relu"
    bottleneck_relu: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.stride != 2 or self.kernel - 2 * self.padding != 1:
            raise ParameterError(
                "stage geometry must halve exactly: stride 2 and kernel = 2*padding + 1"
            )
        if len(self.channels) < 1 or any(c < 1 for c in self.channels):
            raise ParameterError(f"bad channel plan {self.channels}")
        factor = self.stride ** len(self.channels)
        if self.image_hw % factor != 0 or self.image_hw < factor:
            raise ParameterError(f"image_hw {self.image_hw} not divisible by {factor}")
        if self.embedding < 1 or self.embedding >= self.image_hw * self.image_hw:
            raise ParameterError("embedding must be positive and smaller than the pixel count")
        if self.order not in _ORDERS:
            raise ParameterError(f"order must be one of {_ORDERS}, got {self.order!r}")

    @property
    def bottom_hw(self) -> int:
        return self.image_hw // (self.stride ** len(self.channels))

    @property
    def flat_dim(self) -> int:
        return self.channels[-1] * self.bottom_hw * self.bottom_hw


@dataclass(frozen=True)
class NumAEConfig:
    """Geometry of the 1-d numeric autoencoder.

    Two stride-2 stages of length/2 and length/4 filters halve the
    signal twice; the bottleneck embedding has length/4 features.
    """

    length: int = 160
    kernel: int = 5
    stride: int = 2
    padding: int = 2
    order: str = "conv_bn_relu"
    bottleneck_relu: bool = False

    def __post_init__(self):
        if self.length < 8 or self.length % 4 != 0:
            raise ParameterError(f"length must be a multiple of 4 (and >= 8), got {self.length}")
        if self.stride != 2 or self.kernel - 2 * self.padding != 1:
            raise ParameterError(
                "stage geometry must halve exactly: stride 2 and kernel = 2*padding + 1"
            )
        if self.order not in _ORDERS:
            raise ParameterError(f"order must be one of {_ORDERS}, got {self.order!r}")

    @property
    def channels(self) -> tuple[int, int]:
        return (self.length // 2, self.length // 4)

    @property
    def embedding(self) -> int:
        return self.length // 4

    @property
    def flat_dim(self) -> int:
        return (self.length // 4) * (self.length // 4)


AEConfig = VisualAEConfig | NumAEConfig


def kind_of(config: AEConfig) -> str:
    return "visual" if isinstance(config, VisualAEConfig) else "numeric"


def config_digest(config: AEConfig) -> bytes:
    """Stable 8-byte digest of the architecture, for checkpoint headers."""
    doc = {"kind": kind_of(config), **asdict(config)}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).digest()[:8]


@dataclass
class ParamSet:
    """All weights of one model: named arrays in checkpoint order.

    `state` maps parameter names to numpy arrays, trainable parameters
    first and normalization running statistics after, in module
    registration order.  That order is the flattening order of the
    checkpoint file.
    """

    config: AEConfig
    state: "OrderedDict[str, np.ndarray]"

    @property
    def kind(self) -> str:
        return kind_of(self.config)

    def n_parameters(self) -> int:
        return sum(v.size for k, v in self.state.items() if not k.startswith("_stat:"))


def _stage(conv: nn.Module, norm: nn.Module, order: str) -> list[nn.Module]:
    if order == "conv_bn_relu":
        return [conv, norm, nn.ReLU()]
    return [conv, nn.ReLU(), norm]


class _VisualAE(nn.Module):
    def __init__(self, cfg: VisualAEConfig):
        super().__init__()
        chans = (1,) + cfg.channels
        enc: list[nn.Module] = []
        for cin, cout in zip(chans, chans[1:]):
            enc += _stage(
                nn.Conv2d(cin, cout, cfg.kernel, cfg.stride, cfg.padding),
                nn.BatchNorm2d(cout),
                cfg.order,
            )
        self.encoder = nn.Sequential(*enc)
        self.to_embedding = nn.Linear(cfg.flat_dim, cfg.embedding)
        self.from_embedding = nn.Linear(cfg.embedding, cfg.flat_dim)
        rev = cfg.channels[::-1]
        dec: list[nn.Module] = []
        for i, (cin, cout) in enumerate(zip(rev, rev[1:] + (1,))):
            deconv = nn.ConvTranspose2d(cin, cout, cfg.kernel, cfg.stride, cfg.padding, output_padding=1)
            if i < len(rev) - 1:
                dec += _stage(deconv, nn.BatchNorm2d(cout), cfg.order)
            else:
                dec.append(deconv)  # logit head, activation is the column softmax
        self.decoder = nn.Sequential(*dec)
        self._cfg = cfg

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 1, H, W) image batch to (B, 1, H, W) column logits."""
        cfg = self._cfg
        z = self.encoder(x)
        z = self.to_embedding(z.flatten(1))
        if cfg.bottleneck_relu:
            z = F.relu(z)
        z = self.from_embedding(z)
        z = z.reshape(-1, cfg.channels[-1], cfg.bottom_hw, cfg.bottom_hw)
        return self.decoder(z)


class _NumAE(nn.Module):
    def __init__(self, cfg: NumAEConfig):
        super().__init__()
        chans = (1,) + cfg.channels
        enc: list[nn.Module] = []
        for cin, cout in zip(chans, chans[1:]):
            enc += _stage(
                nn.Conv1d(cin, cout, cfg.kernel, cfg.stride, cfg.padding),
                nn.BatchNorm1d(cout),
                cfg.order,
            )
        self.encoder = nn.Sequential(*enc)
        self.to_embedding = nn.Linear(cfg.flat_dim, cfg.embedding)
        self.from_embedding = nn.Linear(cfg.embedding, cfg.flat_dim)
        rev = cfg.channels[::-1]
        dec: list[nn.Module] = []
        for i, (cin, cout) in enumerate(zip(rev, rev[1:] + (1,))):
            deconv = nn.ConvTranspose1d(cin, cout, cfg.kernel, cfg.stride, cfg.padding, output_padding=1)
            if i < len(rev) - 1:
                dec += _stage(deconv, nn.BatchNorm1d(cout), cfg.order)
            else:
                dec.append(deconv)
        self.decoder = nn.Sequential(*dec)
        self._cfg = cfg

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, T) normalized series batch to (B, T) normalized outputs."""
        cfg = self._cfg
        z = self.encoder(x.unsqueeze(1))
        z = self.to_embedding(z.flatten(1))
        if cfg.bottleneck_relu:
            z = F.relu(z)
        z = self.from_embedding(z)
        z = z.reshape(-1, cfg.channels[-1], cfg.length // 4)
        return self.decoder(z).squeeze(1)


def build_module(config: AEConfig, dtype: torch.dtype = torch.float32) -> nn.Module:
    """Construct the torch module for a config (weights are whatever
    torch's fan-in-scaled uniform default produced under the ambient seed)."""
    module = _VisualAE(config) if isinstance(config, VisualAEConfig) else _NumAE(config)
    return module.to(dtype)


def _ordered_state(module: nn.Module) -> "OrderedDict[str, np.ndarray]":
    state: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, p in module.named_parameters():
        state[name] = p.detach().cpu().numpy().copy()
    for name, b in module.named_buffers():
        if name.endswith("num_batches_tracked"):
            continue
        state[f"_stat:{name}"] = b.detach().cpu().numpy().copy()
    return state


def params_from_module(config: AEConfig, module: nn.Module) -> ParamSet:
    return ParamSet(config=config, state=_ordered_state(module))


def load_into_module(params: ParamSet, module: nn.Module) -> nn.Module:
    """Copy a ParamSet's arrays into a freshly built module."""
    with torch.no_grad():
        named_p = dict(module.named_parameters())
        named_b = dict(module.named_buffers())
        for key, value in params.state.items():
            if key.startswith("_stat:"):
                tensor = named_b[key[len("_stat:") :]]
            else:
                tensor = named_p[key]
            if tuple(tensor.shape) != value.shape:
                raise DataError(f"shape mismatch for {key}: {tuple(tensor.shape)} vs {value.shape}")
            tensor.copy_(torch.from_numpy(np.ascontiguousarray(value)).to(tensor.dtype))
    return module


def module_from_params(params: ParamSet, dtype: torch.dtype = torch.float32) -> nn.Module:
    return load_into_module(params, build_module(params.config, dtype))


def init_params(config: AEConfig, seed: int) -> ParamSet:
    """Fresh parameters under torch's fan-in-scaled uniform init, seeded."""
    torch.manual_seed(int(seed))
    return params_from_module(config, build_module(config))


def describe(config: AEConfig) -> dict:
    """Layer-by-layer shapes and the total trainable parameter count."""
    module = build_module(config)
    layers = [
        {"name": name, "shape": list(p.shape), "count": p.numel()}
        for name, p in module.named_parameters()
    ]
    return {
        "kind": kind_of(config),
        "layers": layers,
        "n_parameters": sum(l["count"] for l in layers),
        "digest": config_digest(config).hex(),
    }


def column_softmax_np(logits: np.ndarray) -> np.ndarray:
    """Softmax over rows for each column, computed in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-2, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-2, keepdims=True)


def columnwise_jsd_loss(target_probs: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
    """Column-summed Jensen-Shannon divergence, averaged over the batch.

    target_probs are column distributions (B, 1, H, W); logits are the
    raw decoder outputs, normalized here with a per-column softmax.
    The mixture is clamped away from zero before its log: background
    pixels where the target is zero and the softmax output underflows
    would otherwise turn 0 * log(0) into NaN.
    """
    logq = F.log_softmax(logits, dim=-2)
    q = logq.exp()
    p = target_probs
    m = 0.5 * (p + q)
    logm = torch.log(m.clamp_min(1e-30))
    term_p = torch.xlogy(p, p) - p * logm
    term_q = q * (logq - logm)
    per_example = 0.5 * (term_p + term_q).sum(dim=(-3, -2, -1))
    return per_example.mean()


def huber_loss(target: torch.Tensor, output: torch.Tensor, delta: float = 1.0) -> torch.Tensor:
    return F.huber_loss(output, target, delta=delta, reduction="mean")


def visual_ae_forward(params: ParamSet, images: Sequence[SeriesImage]) -> list[SeriesImage]:
    """Run the image autoencoder in inference mode on a batch of images.

    Outputs are column-stochastic images; the value and time bounds of
    each input are carried onto its forecast, since the model operates
    purely in pixel space.
    """
    if params.kind != "visual":
        raise ParameterError(f"expected visual params, got {params.kind}")
    hw = params.config.image_hw
    arr = np.stack([img.pixels for img in images]).astype(np.float32)[:, None]
    if arr.shape[2] != hw or arr.shape[3] != hw:
        raise ParameterError(f"expected {hw}x{hw} images, got {arr.shape[2]}x{arr.shape[3]}")
    module = module_from_params(params).eval()
    with torch.no_grad():
        logits = module(torch.from_numpy(arr)).numpy()
    probs = column_softmax_np(logits.astype(np.float64))[:, 0]
    return [
        SeriesImage(probs[i], img.value_lo, img.value_hi, img.t_lo, img.t_hi)
        for i, img in enumerate(images)
    ]


def num_ae_forward(params: ParamSet, batch: np.ndarray) -> np.ndarray:
    """Run the numeric autoencoder in inference mode.

    `batch` is (B, T) of series min-max normalized with bounds taken
    from the input window; outputs are in the same normalized scale.
    """
    if params.kind != "numeric":
        raise ParameterError(f"expected numeric params, got {params.kind}")
    x = np.asarray(batch, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != params.config.length:
        raise ParameterError(f"expected (B, {params.config.length}) batch, got {x.shape}")
    module = module_from_params(params).eval()
    with torch.no_grad():
        out = module(torch.from_numpy(x)).numpy()
    return out.astype(np.float64)


def input_minmax(values: np.ndarray) -> tuple[float, float]:
    """Normalization bounds from an input window (never from the target)."""
    return float(np.min(values)), float(np.max(values))


def minmax_normalize(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span <= 0.0:
        span = 1.0  # constant window: map to 0 rather than divide by zero
    return (np.asarray(values, dtype=np.float64) - lo) / span


def minmax_denormalize(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span <= 0.0:
        span = 1.0
    return np.asarray(values, dtype=np.float64) * span + lo


def backward(
    params: ParamSet,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: str = "jsd",
    delta: float = 1.0,
    dtype: torch.dtype = torch.float32,
) -> ParamSet:
    """Gradients of the selected loss for every trainable parameter.

    Runs the model in training mode (normalization uses batch
    statistics), so gradients match what one optimization step would
    see.  The returned ParamSet holds gradient arrays under the
    parameter names, in the same flattening order.  Pass
    dtype=torch.float64 when comparing against finite differences.
    """
    module = module_from_params(params, dtype=dtype).train()
    np_dtype = np.float64 if dtype == torch.float64 else np.float32
    x = torch.from_numpy(np.asarray(inputs, dtype=np_dtype))
    y = torch.from_numpy(np.asarray(targets, dtype=np_dtype))
    out = module(x)
    if loss == "jsd":
        value = columnwise_jsd_loss(y, out)
    elif loss == "huber":
        value = huber_loss(y, out, delta=delta)
    else:
        raise ParameterError(f"unknown loss {loss!r}; expected 'jsd' or 'huber'")
    value.backward()
    grads: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, p in module.named_parameters():
        grads[name] = p.grad.detach().cpu().numpy().copy()
    return ParamSet(config=params.config, state=grads)


def save_checkpoint(path, params: ParamSet) -> None:
    """Write a VFCK checkpoint: 16-byte header, then float32 LE arrays.

    Header: magic "VFCK", u32 version, 8-byte config digest.  Arrays
    follow in the ParamSet order: trainable parameters, then running
    statistics.
    """
    with open(path, "wb") as fh:
        fh.write(VFCK_MAGIC + struct.pack("<I", VFCK_VERSION) + config_digest(params.config))
        for value in params.state.values():
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path, config: AEConfig) -> ParamSet:
    """Read a VFCK checkpoint for a known config, verifying its digest."""
    expected = config_digest(config)
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != VFCK_MAGIC:
            raise DataError(f"not a VFCK checkpoint: {path}")
        (version,) = struct.unpack("<I", header[4:8])
        if version != VFCK_VERSION:
            raise DataError(f"unsupported VFCK version {version}")
        if header[8:16] != expected:
            raise DataError("checkpoint digest does not match the supplied config")
        payload = fh.read()
    template = _ordered_state(build_module(config))
    state: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 0
    for name, arr in template.items():
        nbytes = arr.size * 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"truncated checkpoint: {path}")
        state[name] = np.frombuffer(chunk, dtype="<f4").reshape(arr.shape).astype(np.float32)
        offset += nbytes
    if offset != len(payload):
        raise DataError(f"trailing bytes in checkpoint: {path}")
    return ParamSet(config=config, state=state)
