"""DenseFlowNet: per-view appearance flow from a single luminance image.

pre-conv -> 12 dilated 3x3 layers with global dense connectivity (each layer
sees the pre-conv output and every earlier dense output) -> linear head
emitting U*V*2 offset channels. No pooling, no normalization.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import ConvLayer, Tensor, as_tensor, concat_channels, conv2d

DEFAULT_DILATIONS = ((1, 2, 4), (2, 4, 8), (4, 8, 16), (8, 16, 32))

MAGIC = b"LFAF"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    angular: tuple[int, int] = (8, 8)  # (U, V)
    in_ch: int = 1
    pre_channels: int = 16
    growth: int = 16
    kernel: int = 3
    dilations: tuple[tuple[int, ...], ...] = DEFAULT_DILATIONS

    @property
    def out_ch(self) -> int:
        U, V = self.angular
        return U * V * 2

    @property
    def head_in_ch(self) -> int:
        return self.pre_channels + self.growth * sum(len(b) for b in self.dilations)

    def layer_shapes(self) -> list[tuple[str, tuple[int, int, int, int], int, str]]:
        """(name, weight shape, dilation, activation) for every conv layer in order."""
        k = self.kernel
        layers = [("pre", (self.pre_channels, self.in_ch, k, k), 1, "relu")]
        ch = self.pre_channels
        for bi, block in enumerate(self.dilations):
            for li, d in enumerate(block):
                layers.append((f"block{bi}.conv{li}", (self.growth, ch, k, k), d, "relu"))
                ch += self.growth
        layers.append(("head", (self.out_ch, ch, k, k), 1, "none"))
        return layers

    def to_dict(self) -> dict:
        d = asdict(self)
        d["angular"] = list(self.angular)
        d["dilations"] = [list(b) for b in self.dilations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["angular"] = tuple(d["angular"])
        d["dilations"] = tuple(tuple(b) for b in d["dilations"])
        return cls(**d)

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


def receptive_field(spec: NetworkSpec) -> int:
    """Extent in px of the head's receptive field along one axis.

    Dense skips do not shorten the longest path, which passes through every
    layer, so the extents add up.
    """
    return 1 + sum((spec.kernel - 1) * d for _, _, d, _ in spec.layer_shapes())


@dataclass
class NetworkParams:
    spec: NetworkSpec
    names: list[str]
    layers: list[ConvLayer] = field(repr=False)

    def tensors(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, layer in zip(self.names, self.layers):
            out += [(f"{name}.weight", layer.weights), (f"{name}.bias", layer.bias)]
        return out

    def copy(self) -> "NetworkParams":
        layers = [ConvLayer(Tensor(l.weights.data.copy(), requires_grad=True, name=l.weights.name),
                            Tensor(l.bias.data.copy(), requires_grad=True, name=l.bias.name),
                            l.dilation, l.activation) for l in self.layers]
        return NetworkParams(self.spec, list(self.names), layers)

    def astype(self, dtype) -> "NetworkParams":
        p = self.copy()
        for t in p.tensors():
            t.data = t.data.astype(dtype)
        return p


def init_network(spec: NetworkSpec = NetworkSpec(), seed: int = 0, dtype=np.float32) -> NetworkParams:
    """He-normal hidden layers, zero head (so the initial flow is exactly zero)."""
    rng = np.random.default_rng(seed)
    names, layers = [], []
    for name, shape, dil, act in spec.layer_shapes():
        if name == "head":
            w = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        b = np.zeros(shape[0])
        layers.append(ConvLayer(Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.weight"),
                                Tensor(b.astype(dtype), requires_grad=True, name=f"{name}.bias"),
                                dil, act))
        names.append(name)
    return NetworkParams(spec, names, layers)


def forward(params: NetworkParams, y_image) -> Tensor:
    """Luminance [1, H, W] -> flow Tensor [V, U, 2, H, W] (dx, dy in pixels)."""
    x = as_tensor(y_image)
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
    spec = params.spec
    if x.ndim != 3 or x.shape[0] != spec.in_ch:
        raise ValueError(f"network expects [{spec.in_ch},H,W] input, got shape {x.shape}")
    if x.dtype != params.layers[0].weights.dtype:
        x = Tensor(x.data.astype(params.layers[0].weights.dtype))
    feats = [conv2d(x, params.layers[0])]
    for layer in params.layers[1:-1]:
        feats.append(conv2d(concat_channels(feats), layer))
    out = conv2d(concat_channels(feats), params.layers[-1])
    U, V = spec.angular
    h, w = x.shape[1:]
    return out.reshape(V, U, 2, h, w)


# checkpoints -------------------------------------------------------------

def save_checkpoint(params: NetworkParams, path) -> None:
    """LFAF | u32 version | 32-byte architecture digest | u32 count | tensors.

    Each tensor: u16 name length, utf-8 name, u8 ndim, u32 dims, float32 LE data.
    """
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), params.spec.digest()]
    named = params.named_tensors()
    chunks.append(struct.pack("<I", len(named)))
    for name, t in named:
        nb = name.encode()
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, spec: NetworkSpec) -> NetworkParams:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an LFAF checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if take(32) != spec.digest():
        raise CheckpointError(f"{path}: architecture digest mismatch (checkpoint built for another network)")
    (count,) = struct.unpack("<I", take(4))
    params = init_network(spec, seed=0)
    expected = params.named_tensors()
    if count != len(expected):
        raise CheckpointError(f"{path}: holds {count} tensors, architecture needs {len(expected)}")
    for name, t in expected:
        (n,) = struct.unpack("<H", take(2))
        got_name = take(n).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        if got_name != name or tuple(shape) != t.shape:
            raise CheckpointError(f"{path}: tensor {got_name}{list(shape)} where {name}{list(t.shape)} expected")
        size = int(np.prod(shape)) * 4
        t.data = np.frombuffer(take(size), dtype="<f4").astype(np.float32).reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return params
