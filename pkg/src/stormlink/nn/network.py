"""Network assembly, initialization, prediction and the model file format.

Two-stage detector networks share one topology: conv blocks (conv3x3 +
ReLU, repeated, then 2x2 max pool) followed by linear blocks (linear +
ReLU) and a head. The classification head is a single sigmoid unit; the
localization head emits two raw coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layers import Conv2D, Flatten, Layer, Linear, MaxPool2D, ReLU, Sigmoid

KIND_CLASSIFY = "classify"
KIND_LOCATE = "locate"

FORMAT_TAG = "storm-model-v1"
_HEADER_END = b"---\n"


@dataclass(frozen=True)
class ArchConfig:
    """Desk-scale by default; the full-scale configuration is constructible too."""

    n_conv_blocks: int = 3
    convs_per_block: int = 3
    base_filters: int = 8
    filter_growth: int = 2
    filter_cap: int = 1024
    linear_widths: tuple[int, ...] = (64, 32)
    in_channels: int = 2
    input_size: int = 40

    def __post_init__(self) -> None:
        object.__setattr__(self, "linear_widths", tuple(self.linear_widths))
        if self.n_conv_blocks < 1 or self.convs_per_block < 1:
            raise ValueError("need at least one conv block with one conv")
        if self.base_filters < 1 or self.filter_growth < 1 or self.filter_cap < 1:
            raise ValueError("filter counts must be positive")
        if not self.linear_widths or any(w < 1 for w in self.linear_widths):
            raise ValueError("linear widths must be positive")
        if self.in_channels < 1 or self.input_size < 1:
            raise ValueError("input dimensions must be positive")
        size = self.input_size
        for _ in range(self.n_conv_blocks):
            if size < 2:
                raise ValueError(
                    f"input size {self.input_size} cannot survive "
                    f"{self.n_conv_blocks} spatial halvings"
                )
            size = -(-size // 2)

    def block_filters(self) -> list[int]:
        return [
            min(self.base_filters * self.filter_growth**b, self.filter_cap)
            for b in range(self.n_conv_blocks)
        ]

    def flatten_size(self) -> int:
        size = self.input_size
        for _ in range(self.n_conv_blocks):
            size = -(-size // 2)
        return self.block_filters()[-1] * size * size


class Network:
    def __init__(
        self,
        arch: ArchConfig,
        kind: str,
        layers: list[Layer],
        norm_stats: tuple[np.ndarray, np.ndarray],
        seed: int,
    ) -> None:
        if kind not in (KIND_CLASSIFY, KIND_LOCATE):
            raise ValueError(f"unknown network kind {kind!r}")
        self.arch = arch
        self.kind = kind
        self.layers = layers
        self.norm_stats = (
            np.asarray(norm_stats[0], dtype=np.float64),
            np.asarray(norm_stats[1], dtype=np.float64),
        )
        self.seed = seed

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out)
        return out[:, 0] if self.kind == KIND_CLASSIFY else out

    def backward(self, grad: np.ndarray) -> None:
        g = np.asarray(grad, dtype=np.float64)
        if self.kind == KIND_CLASSIFY:
            g = g[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, weight, grad) triples in declaration order."""
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.weights):
                out.append((f"layer{i}.{key}", layer.weights[key], layer.grads[key]))
        return out

    def param_count(self) -> int:
        return sum(w.size for _, w, _ in self.parameters())

    def normalize(self, x: np.ndarray) -> np.ndarray:
        mean, std = self.norm_stats
        safe = np.maximum(std, 1e-6)
        return (np.asarray(x, dtype=np.float64) - mean[:, None, None]) / safe[:, None, None]


def build_network(
    arch: ArchConfig,
    kind: str,
    seed: int,
    norm_stats: tuple[np.ndarray, np.ndarray] | None = None,
) -> Network:
    """Construct and initialize a network deterministically from a seed.

    Classification weights are He-normal over fan-in with zero biases;
    localization weights are Normal(0, 0.03), which leaves early outputs
    near zero yet large enough to regress coordinates in [0, size).
    """
    if norm_stats is None:
        norm_stats = (np.zeros(arch.in_channels), np.ones(arch.in_channels))
    layers: list[Layer] = []
    in_ch = arch.in_channels
    for filters in arch.block_filters():
        for _ in range(arch.convs_per_block):
            layers.append(Conv2D(in_ch, filters))
            layers.append(ReLU())
            in_ch = filters
        layers.append(MaxPool2D())
    layers.append(Flatten())
    in_features = arch.flatten_size()
    for width in arch.linear_widths:
        layers.append(Linear(in_features, width))
        layers.append(ReLU())
        in_features = width
    if kind == KIND_CLASSIFY:
        layers.append(Linear(in_features, 1))
        layers.append(Sigmoid())
    else:
        layers.append(Linear(in_features, 2))

    rng = np.random.default_rng(seed)
    for layer in layers:
        if not layer.weights:
            continue
        w = layer.weights["w"]
        if kind == KIND_LOCATE:
            w[...] = rng.normal(0.0, 0.03, size=w.shape)
        else:
            fan_in = int(np.prod(w.shape[1:]))
            w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=w.shape)
    return Network(arch, kind, layers, norm_stats, seed)


def predict(net: Network, patches: np.ndarray) -> np.ndarray:
    """Forward raw (N, C, s, s) patches through normalization and the network."""
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected (N, C, s, s) input, got shape {x.shape}")
    mean, std = net.norm_stats
    safe = np.maximum(std, 1e-6)
    return net.forward((x - mean[None, :, None, None]) / safe[None, :, None, None])


def save_model(net: Network, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = net.parameters()
    blob = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes() for _, w, _ in params)
    a = net.arch
    header = "\n".join(
        [
            f"format: {FORMAT_TAG}",
            f"kind: {net.kind}",
            f"n_conv_blocks: {a.n_conv_blocks}",
            f"convs_per_block: {a.convs_per_block}",
            f"base_filters: {a.base_filters}",
            f"filter_growth: {a.filter_growth}",
            f"filter_cap: {a.filter_cap}",
            "linear_widths: " + ",".join(str(w) for w in a.linear_widths),
            f"in_channels: {a.in_channels}",
            f"input_size: {a.input_size}",
            "norm_mean: " + ",".join(repr(float(v)) for v in net.norm_stats[0]),
            "norm_std: " + ",".join(repr(float(v)) for v in net.norm_stats[1]),
            f"seed: {net.seed}",
            f"param_count: {net.param_count()}",
            f"blob_bytes: {len(blob)}",
        ]
    )
    with open(out, "wb") as fh:
        fh.write(header.encode() + b"\n" + _HEADER_END + blob)
    return out


def load_model(path: str | Path) -> Network:
    raw = Path(path).read_bytes()
    cut = raw.find(_HEADER_END)
    if cut < 0:
        raise ValueError("model file has no header terminator")
    header: dict[str, str] = {}
    for line in raw[:cut].decode().splitlines():
        if line.strip():
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
    if header.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported model format: {header.get('format')}")
    arch = ArchConfig(
        n_conv_blocks=int(header["n_conv_blocks"]),
        convs_per_block=int(header["convs_per_block"]),
        base_filters=int(header["base_filters"]),
        filter_growth=int(header["filter_growth"]),
        filter_cap=int(header["filter_cap"]),
        linear_widths=tuple(int(v) for v in header["linear_widths"].split(",")),
        in_channels=int(header["in_channels"]),
        input_size=int(header["input_size"]),
    )
    norm_stats = (
        np.array([float(v) for v in header["norm_mean"].split(",")]),
        np.array([float(v) for v in header["norm_std"].split(",")]),
    )
    net = build_network(arch, header["kind"], int(header["seed"]), norm_stats)
    blob = raw[cut + len(_HEADER_END) :]
    if len(blob) != int(header["blob_bytes"]):
        raise ValueError(
            f"model blob is {len(blob)} bytes, header declares {header['blob_bytes']}"
        )
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != int(header["param_count"]):
        raise ValueError("parameter count does not match blob size")
    offset = 0
    for _, w, _ in net.parameters():
        w[...] = flat[offset : offset + w.size].reshape(w.shape)
        offset += w.size
    return net
