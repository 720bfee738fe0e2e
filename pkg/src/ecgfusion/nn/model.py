"""Residual 1-D conv net with an optional merged (deep + engineered) head.

The deep branch is: stem conv -> BN -> ReLU, then residual blocks (two
convolutions with BN/ReLU/dropout, a 1x1-projected skip, post-add ReLU and
x4 max-pool subsampling), then global average pooling, so the deep feature
width equals the last block's channel count. The head is a single FC layer,
or a stack of FC layers when merge hidden sizes are configured; engineered
features enter the first head layer through their own weight block.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, asdict

import numpy as np

from .layers import (BatchNorm1d, ConcatDense, Conv1d, Dense, Dropout,
                     GlobalAvgPool, Layer, MaxPool1d, ReLU, Sigmoid)

TASKS = ("diagnosis", "risk", "age")
N_LEADS = 12
FULL_INPUT_LEN = 4096
TINY_INPUT_LEN = 512


@dataclass(frozen=True)
class NetConfig:
    task: str
    input_len: int
    stem_filters: int
    stem_kernel: int
    block_filters: tuple[int, ...]
    block_kernel: int
    block_subsample: int = 4
    dropout: float = 0.2
    merge_fe_features: int = 0
    merge_hidden: tuple[int, ...] = ()
    n_leads: int = N_LEADS

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if min(self.stem_filters, self.stem_kernel, self.block_kernel,
               self.block_subsample, self.input_len) < 1:
            raise ValueError("sizes must be positive")
        if not self.block_filters:
            raise ValueError("need at least one residual block")
        if any(h < 1 for h in self.merge_hidden):
            raise ValueError("merge hidden sizes must be >= 1")
        if self.merge_fe_features < 0:
            raise ValueError("merge_fe_features must be >= 0")

    @property
    def n_outputs(self) -> int:
        return 6 if self.task == "diagnosis" else 1

    @property
    def sigmoid_head(self) -> bool:
        return self.task in ("diagnosis", "risk")

    @property
    def feature_width(self) -> int:
        return self.block_filters[-1]

    @classmethod
    def full(cls, task: str, merge_fe_features: int = 0,
             merge_hidden: tuple[int, ...] = ()) -> "NetConfig":
        """The benchmark-scale profile: exactly 4 residual blocks."""
        cfg = cls(task=task, input_len=FULL_INPUT_LEN,
                  stem_filters=64, stem_kernel=16,
                  block_filters=(128, 196, 256, 320), block_kernel=16,
                  merge_fe_features=merge_fe_features,
                  merge_hidden=merge_hidden)
        assert len(cfg.block_filters) == 4
        cfg.validate()
        return cfg

    @classmethod
    def tiny(cls, task: str, merge_fe_features: int = 0,
             merge_hidden: tuple[int, ...] = (),
             input_len: int = TINY_INPUT_LEN,
             block_filters: tuple[int, ...] = (8, 16),
             kernel: int = 8, dropout: float = 0.1) -> "NetConfig":
        """Desk-scale profile for tests and small experiments."""
        cfg = cls(task=task, input_len=input_len,
                  stem_filters=block_filters[0], stem_kernel=kernel,
                  block_filters=block_filters, block_kernel=kernel,
                  dropout=dropout, merge_fe_features=merge_fe_features,
                  merge_hidden=merge_hidden)
        cfg.validate()
        return cfg

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "NetConfig":
        obj = dict(obj)
        obj["block_filters"] = tuple(obj["block_filters"])
        obj["merge_hidden"] = tuple(obj.get("merge_hidden", ()))
        cfg = cls(**obj)
        cfg.validate()
        return cfg


def prepare_waveform(samples: np.ndarray, target_len: int) -> np.ndarray:
    """Symmetric zero-pad (or centre-crop) the time axis to ``target_len``."""
    n = samples.shape[-1]
    if n == target_len:
        return samples
    if n < target_len:
        left = (target_len - n) // 2
        right = target_len - n - left
        pad = [(0, 0)] * (samples.ndim - 1) + [(left, right)]
        return np.pad(samples, pad)
    start = (n - target_len) // 2
    return samples[..., start:start + target_len]


class _ResidualBlock:
    def __init__(self, c_in: int, c_out: int, kernel: int, subsample: int,
                 dropout: float, rng: np.random.Generator, dtype):
        self.conv1 = Conv1d(c_in, c_out, kernel, rng, dtype, bias=False)
        self.bn1 = BatchNorm1d(c_out, dtype)
        self.relu1 = ReLU()
        self.drop = Dropout(dropout)
        self.conv2 = Conv1d(c_out, c_out, kernel, rng, dtype, bias=False)
        self.bn2 = BatchNorm1d(c_out, dtype)
        self.proj = Conv1d(c_in, c_out, 1, rng, dtype)
        self.relu2 = ReLU()
        self.pool = MaxPool1d(subsample)

    def named(self) -> list[tuple[str, Layer]]:
        return [("conv1", self.conv1), ("bn1", self.bn1),
                ("conv2", self.conv2), ("bn2", self.bn2),
                ("proj", self.proj)]

    def forward(self, x, train, rng):
        h = self.conv1.forward(x, train, rng)
        h = self.bn1.forward(h, train, rng)
        h = self.relu1.forward(h, train, rng)
        h = self.drop.forward(h, train, rng)
        h = self.conv2.forward(h, train, rng)
        h = self.bn2.forward(h, train, rng)
        s = self.proj.forward(x, train, rng)
        z = self.relu2.forward(h + s, train, rng)
        return self.pool.forward(z, train, rng)

    def backward(self, dy):
        dz = self.pool.backward(dy)
        dz = self.relu2.backward(dz)
        dh = self.bn2.backward(dz)
        dh = self.conv2.backward(dh)
        dh = self.drop.backward(dh)
        dh = self.relu1.backward(dh)
        dh = self.bn1.backward(dh)
        dx = self.conv1.backward(dh)
        dx = dx + self.proj.backward(dz)
        return dx


class ResidualNet:
    """The model object: owns layers, exposes a flat parameter tree."""

    def __init__(self, config: NetConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.stem_conv = Conv1d(config.n_leads, config.stem_filters,
                                config.stem_kernel, rng, dtype, bias=False)
        self.stem_bn = BatchNorm1d(config.stem_filters, dtype)
        self.stem_relu = ReLU()
        self.blocks: list[_ResidualBlock] = []
        c_in = config.stem_filters
        for c_out in config.block_filters:
            self.blocks.append(_ResidualBlock(c_in, c_out, config.block_kernel,
                                              config.block_subsample,
                                              config.dropout, rng, dtype))
            c_in = c_out
        self.gap = GlobalAvgPool()
        self.head: list[Layer] = []
        widths = list(config.merge_hidden) + [config.n_outputs]
        first_out = widths[0]
        self.head.append(ConcatDense(config.feature_width,
                                     config.merge_fe_features,
                                     first_out, rng, dtype))
        for h_in, h_out in zip(widths[:-1], widths[1:]):
            self.head.append(ReLU())
            self.head.append(Dense(h_in, h_out, rng, dtype))
        self.out_act = Sigmoid() if config.sigmoid_head else None

    # -- parameter tree ----------------------------------------------------

    def _named_layers(self) -> list[tuple[str, Layer]]:
        named: list[tuple[str, Layer]] = [("stem_conv", self.stem_conv),
                                          ("stem_bn", self.stem_bn)]
        for i, blk in enumerate(self.blocks):
            named.extend((f"block{i}.{n}", lay) for n, lay in blk.named())
        named.extend((f"head{i}", lay) for i, lay in enumerate(self.head)
                     if lay.params)
        return named

    def params(self) -> "OrderedDict[str, np.ndarray]":
        out: OrderedDict[str, np.ndarray] = OrderedDict()
        for prefix, layer in self._named_layers():
            for name, arr in layer.params.items():
                out[f"{prefix}.{name}"] = arr
        return out

    def grads(self) -> "OrderedDict[str, np.ndarray]":
        out: OrderedDict[str, np.ndarray] = OrderedDict()
        for prefix, layer in self._named_layers():
            for name in layer.params:
                out[f"{prefix}.{name}"] = layer.grads[name]
        return out

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        out: OrderedDict[str, np.ndarray] = OrderedDict()
        for prefix, layer in self._named_layers():
            for name, arr in layer.buffers.items():
                out[f"{prefix}.{name}"] = arr
        return out

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict((k, v.copy()) for k, v in self.params().items())
        out.update((k, v.copy()) for k, v in self.buffers().items())
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        live = dict(self.params())
        bufs = {}
        for prefix, layer in self._named_layers():
            for name in layer.buffers:
                bufs[f"{prefix}.{name}"] = (layer, name)
        for key, value in state.items():
            if key in live:
                if live[key].shape != value.shape:
                    raise ValueError(f"{key}: shape {value.shape} != {live[key].shape}")
                live[key][...] = value
            elif key in bufs:
                layer, name = bufs[key]
                layer.buffers[name] = np.asarray(value, dtype=layer.buffers[name].dtype)
            else:
                raise KeyError(f"unknown tensor {key!r}")

    # -- forward / backward -------------------------------------------------

    def _check_inputs(self, waves: np.ndarray, fe: np.ndarray | None) -> None:
        cfg = self.config
        if waves.ndim != 3 or waves.shape[1:] != (cfg.n_leads, cfg.input_len):
            raise ValueError(f"waveform batch must be (B, {cfg.n_leads}, "
                             f"{cfg.input_len}), got {waves.shape}")
        if cfg.merge_fe_features:
            if fe is None or fe.shape != (waves.shape[0], cfg.merge_fe_features):
                raise ValueError("engineered-feature batch missing or misshaped")
            if not np.isfinite(fe).all():
                raise ValueError("non-finite engineered features")

    def forward(self, waves: np.ndarray, fe: np.ndarray | None = None,
                train: bool = False, rng: np.random.Generator | None = None,
                return_features: bool = False):
        self._check_inputs(waves, fe)
        # Public input is (B, leads, L); the conv stack runs channels-last.
        x = np.ascontiguousarray(
            waves.astype(self.dtype, copy=False).transpose(0, 2, 1))
        h = self.stem_conv.forward(x, train, rng)
        h = self.stem_bn.forward(h, train, rng)
        h = self.stem_relu.forward(h, train, rng)
        for blk in self.blocks:
            h = blk.forward(h, train, rng)
        feats = self.gap.forward(h, train, rng)
        fe_cast = None if fe is None else fe.astype(self.dtype, copy=False)
        z = self.head[0].forward((feats, fe_cast), train, rng)
        for lay in self.head[1:]:
            z = lay.forward(z, train, rng)
        if not np.isfinite(z).all():
            raise FloatingPointError("non-finite activations: training diverged")
        out = self.out_act.forward(z, train, rng) if self.out_act else z
        return (out, feats) if return_features else out

    def backward(self, dout: np.ndarray) -> None:
        d = self.out_act.backward(dout) if self.out_act else dout
        for lay in reversed(self.head[1:]):
            d = lay.backward(d)
        d, _dfe = self.head[0].backward(d)
        d = self.gap.backward(d)
        for blk in reversed(self.blocks):
            d = blk.backward(d)
        d = self.stem_relu.backward(d)
        d = self.stem_bn.backward(d)
        self.stem_conv.backward(d)


def forward(config: NetConfig, params: dict[str, np.ndarray],
            waves: np.ndarray, fe: np.ndarray | None = None,
            return_features: bool = False):
    """Stateless inference-mode forward for a parameter set."""
    net = ResidualNet(config, seed=0)
    net.load_state(params)
    return net.forward(waves, fe=fe, train=False,
                       return_features=return_features)
