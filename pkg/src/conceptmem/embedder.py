"""Embedding networks mapping raw samples to fixed-length hidden vectors.

Three interchangeable kinds:

* ``cnn``   two conv-conv-batchnorm-relu-pool blocks, then FC/relu/
            batchnorm/FC, for square single-channel images;
* ``mlp``   a plain relu MLP for synthetic feature vectors;
* ``identity``  pass-through (flatten), used as an oracle in tests.

Within a training episode all samples are embedded as one batch so the
batch normalization statistics are non-degenerate; evaluation uses the
running statistics and is a pure per-sample function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Node
from .errors import ConfigError, DimensionError
from .params import ParamSet, glorot_uniform
from .rng import Xoshiro256

KINDS = ("cnn", "mlp", "identity")

# full-scale defaults for 28x28 glyphs
CNN_FILTERS = (128, 256)
CNN_HIDDEN = 300

# reduced profile for fast gradient checks
CNN_FILTERS_SMALL = (8, 16)
CNN_HIDDEN_SMALL = 32


@dataclass
class EmbedderConfig:
    kind: str
    input_shape: tuple
    hidden_size: int
    widths: tuple = ()            # mlp layer widths, last equals hidden_size
    conv_filters: tuple = CNN_FILTERS

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.widths = tuple(int(w) for w in self.widths)
        self.conv_filters = tuple(int(f) for f in self.conv_filters)
        validate_config(self)

    @property
    def flat_input(self) -> int:
        return int(np.prod(self.input_shape, dtype=np.int64))


def validate_config(cfg: EmbedderConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError(f"embedder.kind must be one of {KINDS}, got {cfg.kind!r}")
    if cfg.hidden_size < 1:
        raise ConfigError(f"embedder.hidden_size must be >= 1, got {cfg.hidden_size}")
    if any(d < 1 for d in cfg.input_shape):
        raise ConfigError(f"embedder.input_shape has nonpositive dims: {cfg.input_shape}")
    if cfg.kind == "cnn":
        shape = cfg.input_shape
        if len(shape) != 3 or shape[0] != 1 or shape[1] != shape[2]:
            raise ConfigError(
                f"cnn embedder needs a square single-channel input [1,s,s], got {shape}")
        side = shape[1]
        # two 2x2 pools, and the second conv stack needs >= 3x3 to operate
        if side % 4 != 0 or side < 8:
            raise ConfigError(f"cnn input side must be a multiple of 4 and >= 8, got {side}")
        if len(cfg.conv_filters) != 2 or any(f < 1 for f in cfg.conv_filters):
            raise ConfigError(f"embedder.conv_filters must be two positive counts, got {cfg.conv_filters}")
    elif cfg.kind == "mlp":
        if len(cfg.input_shape) != 1:
            raise ConfigError(f"mlp embedder needs a flat input shape, got {cfg.input_shape}")
        if not cfg.widths:
            raise ConfigError("mlp embedder needs at least one layer width")
        if any(w < 1 for w in cfg.widths):
            raise ConfigError(f"mlp widths must be positive, got {cfg.widths}")
        if cfg.widths[-1] != cfg.hidden_size:
            raise ConfigError(
                f"last mlp width {cfg.widths[-1]} must equal hidden_size {cfg.hidden_size}")
    else:
        if cfg.flat_input != cfg.hidden_size:
            raise ConfigError(
                f"identity embedder requires hidden_size == flattened input "
                f"({cfg.flat_input}), got {cfg.hidden_size}")


def reduced_cnn_config() -> EmbedderConfig:
    """Small square-image profile so finite-difference checks stay fast."""
    return EmbedderConfig(kind="cnn", input_shape=(1, 8, 8),
                          hidden_size=CNN_HIDDEN_SMALL, conv_filters=CNN_FILTERS_SMALL)


def build_embedder(cfg: EmbedderConfig, seed: int) -> ParamSet:
    rng = Xoshiro256(seed)
    pset = ParamSet(meta={"kind": cfg.kind})
    if cfg.kind == "identity":
        return pset
    if cfg.kind == "mlp":
        d_prev = cfg.input_shape[0]
        for i, w in enumerate(cfg.widths, start=1):
            pset.add(f"fc{i}.w", glorot_uniform(rng, (d_prev, w), d_prev, w))
            pset.add(f"fc{i}.b", np.zeros(w))
            d_prev = w
        return pset

    f1, f2 = cfg.conv_filters
    side = cfg.input_shape[1]
    flat = f2 * (side // 4) * (side // 4)
    h = cfg.hidden_size

    def conv(name, c_in, c_out):
        pset.add(f"{name}.k", glorot_uniform(rng, (c_out, c_in, 3, 3), c_in * 9, c_out * 9))
        pset.add(f"{name}.b", np.zeros(c_out))

    def bn(name, n):
        pset.add(f"{name}.gamma", np.ones(n))
        pset.add(f"{name}.beta", np.zeros(n))
        pset.add_state(f"{name}.mean", np.zeros(n))
        pset.add_state(f"{name}.var", np.ones(n))

    conv("conv1a", 1, f1)
    conv("conv1b", f1, f1)
    bn("bn1", f1)
    conv("conv2a", f1, f2)
    conv("conv2b", f2, f2)
    bn("bn2", f2)
    pset.add("fc1.w", glorot_uniform(rng, (flat, h), flat, h))
    pset.add("fc1.b", np.zeros(h))
    bn("bn3", h)
    pset.add("fc2.w", glorot_uniform(rng, (h, h), h, h))
    pset.add("fc2.b", np.zeros(h))
    return pset


def _bn_state(pset: ParamSet, name: str) -> BatchNormState:
    # shares the arrays, and batchnorm updates them in place
    return BatchNormState(mean=pset.state[f"{name}.mean"], var=pset.state[f"{name}.var"])


def _bn_spatial(pset: ParamSet, name: str, x: Node, train: bool) -> Node:
    """Per-channel batchnorm of x[B, C, H, W] over batch and space."""
    b, c, hh, ww = x.value.shape
    rows = ad.reshape(ad.permute(x, (0, 2, 3, 1)), (b * hh * ww, c))
    st = _bn_state(pset, name)
    out = ad.batchnorm(rows, pset.params[f"{name}.gamma"], pset.params[f"{name}.beta"], st, train)
    return ad.permute(ad.reshape(out, (b, hh, ww, c)), (0, 3, 1, 2))


def _bn_flat(pset: ParamSet, name: str, x: Node, train: bool) -> Node:
    st = _bn_state(pset, name)
    return ad.batchnorm(x, pset.params[f"{name}.gamma"], pset.params[f"{name}.beta"], st, train)


def _conv_block(pset: ParamSet, x: Node, name_a: str, name_b: str) -> Node:
    """conv-conv on a stacked batch [B, C, H, W], sample by sample."""
    b = x.value.shape[0]
    outs = []
    for i in range(b):
        xi = ad.index0(x, i)
        xi = ad.conv2d_3x3(xi, pset.params[f"{name_a}.k"], pset.params[f"{name_a}.b"])
        xi = ad.conv2d_3x3(xi, pset.params[f"{name_b}.k"], pset.params[f"{name_b}.b"])
        outs.append(xi)
    return ad.stack0(outs)


def _pool_batch(x: Node) -> Node:
    b, c, hh, ww = x.value.shape
    pooled = ad.maxpool2(ad.reshape(x, (b * c, hh, ww)))
    return ad.reshape(pooled, (b, c, hh // 2, ww // 2))


def embed_batch(pset: ParamSet, cfg: EmbedderConfig, xs: np.ndarray, train: bool) -> Node:
    """Embed a batch of raw samples, shape [B, *input_shape] -> Node [B, hidden]."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1 + len(cfg.input_shape) or xs.shape[1:] != cfg.input_shape:
        raise DimensionError(
            f"embed: batch shape {xs.shape} does not match input shape {cfg.input_shape}")
    n = xs.shape[0]
    if cfg.kind == "identity":
        return ad.constant(xs.reshape(n, cfg.flat_input))
    if cfg.kind == "mlp":
        h = ad.constant(xs)
        for i in range(1, len(cfg.widths) + 1):
            h = ad.add_rowvec(ad.matmul(h, pset.params[f"fc{i}.w"]), pset.params[f"fc{i}.b"])
            if i < len(cfg.widths):
                h = ad.relu(h)
        return h

    x = ad.constant(xs)
    x = _conv_block(pset, x, "conv1a", "conv1b")
    x = _pool_batch(ad.relu(_bn_spatial(pset, "bn1", x, train)))
    x = _conv_block(pset, x, "conv2a", "conv2b")
    x = _pool_batch(ad.relu(_bn_spatial(pset, "bn2", x, train)))
    side = cfg.input_shape[1] // 4
    flat = cfg.conv_filters[1] * side * side
    x = ad.reshape(x, (n, flat))
    x = ad.add_rowvec(ad.matmul(x, pset.params["fc1.w"]), pset.params["fc1.b"])
    x = _bn_flat(pset, "bn3", ad.relu(x), train)
    return ad.add_rowvec(ad.matmul(x, pset.params["fc2.w"]), pset.params["fc2.b"])


def embed(pset: ParamSet, cfg: EmbedderConfig, x: np.ndarray, train: bool = False) -> Node:
    """Embed one sample -> Node [hidden]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != cfg.input_shape:
        raise DimensionError(f"embed: sample shape {x.shape} != input shape {cfg.input_shape}")
    out = embed_batch(pset, cfg, x[None, ...], train)
    return ad.reshape(out, (cfg.hidden_size,))


def embed_with_label(pset: ParamSet, cfg: EmbedderConfig, x: np.ndarray,
                     y: np.ndarray, l_label: int, train: bool = False):
    """The per-step state contribution: the pair (embedding, label vector).

    The two parts stay separate because downstream attention consumes
    them through separate channels.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (l_label,):
        raise DimensionError(f"label vector shape {y.shape} != ({l_label},)")
    return embed(pset, cfg, x, train), y
