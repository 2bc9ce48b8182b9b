"""Temporal convolution encoder with hand-written backpropagation.

The encoder maps a ``dim x t`` clip to a zero-mean, unit-length embedding.
Layers are applied to a batch laid out as ``(batch, time, channels)``:

``conv``    valid 1-D convolution over time, weight ``(out, in, kernel)``
``tanh``    element-wise
``pool``    mean over the time axis, ``(B, T, C) -> (B, C)``
``affine``  ``(B, C_in) -> (B, C_out)``, weight ``(out, in)``

The default stack is conv(k=7, s=2) -> tanh -> conv(k=5, s=2) -> tanh ->
pool -> affine, followed by the normalization.
"""

from __future__ import annotations

import copy
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadMagic, ShapeMismatch, TruncatedPayload, VersionMismatch
from .losses import normalize_backward, normalize_rows

KINDS = ("conv", "tanh", "pool", "affine")
CHECKPOINT_MAGIC = b"BNET"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    kind: str
    in_ch: int
    in_len: int
    out_ch: int
    out_len: int
    kernel: int = 0
    stride: int = 0
    W: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def has_params(self) -> bool:
        return self.W is not None


@dataclass
class EncoderParams:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ShapeMismatch("encoder needs at least one layer")
        if self.layers[0].kind not in ("conv", "pool"):
            raise ShapeMismatch("first layer must be conv or pool (it fixes the input shape)")
        prev = self.layers[0]
        for lay in self.layers[1:]:
            if (lay.in_ch, lay.in_len) != (prev.out_ch, prev.out_len):
                raise ShapeMismatch(f"{lay.kind} expects ({lay.in_ch}, {lay.in_len}), "
                                    f"previous layer gives ({prev.out_ch}, {prev.out_len})")
            prev = lay
        if self.layers[-1].out_len != 1:
            raise ShapeMismatch("encoder output must be pooled to a vector")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_ch

    @property
    def input_t(self) -> int:
        return self.layers[0].in_len

    @property
    def embedding_dim(self) -> int:
        return self.layers[-1].out_ch

    def copy(self) -> EncoderParams:
        return copy.deepcopy(self)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for lay in self.layers:
            if lay.has_params:
                out += [lay.W, lay.b]
        return out

    def flat(self) -> np.ndarray:
        arrs = self.arrays()
        return np.concatenate([a.ravel() for a in arrs]) if arrs else np.zeros(0)

    def with_flat(self, vec: np.ndarray) -> EncoderParams:
        new = self.copy()
        pos = 0
        for lay in new.layers:
            if lay.has_params:
                lay.W = vec[pos : pos + lay.W.size].reshape(lay.W.shape).copy()
                pos += lay.W.size
                lay.b = vec[pos : pos + lay.b.size].reshape(lay.b.shape).copy()
                pos += lay.b.size
        if pos != vec.size:
            raise ShapeMismatch(f"flat vector has {vec.size} entries, parameters need {pos}")
        return new

    def zeros_like(self) -> EncoderParams:
        return self.with_flat(np.zeros_like(self.flat()))

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))

    def scale_(self, factor: float) -> None:
        for a in self.arrays():
            a *= factor

    def add_(self, other: EncoderParams, factor: float = 1.0) -> None:
        for a, g in zip(self.arrays(), other.arrays()):
            a += factor * g

    def equals(self, other: EncoderParams) -> bool:
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if (a.kind, a.in_ch, a.in_len, a.out_ch, a.out_len, a.kernel, a.stride) != (
                b.kind, b.in_ch, b.in_len, b.out_ch, b.out_len, b.kernel, b.stride
            ):
                return False
        return all(np.array_equal(x, y) for x, y in zip(self.arrays(), other.arrays()))


# --------------------------------------------------------------------------
# construction


def conv_layer(in_ch, in_len, out_ch, kernel, stride) -> Layer:
    if in_len < kernel:
        raise ShapeMismatch(f"sequence length {in_len} shorter than kernel {kernel}")
    out_len = (in_len - kernel) // stride + 1
    return Layer("conv", in_ch, in_len, out_ch, out_len, kernel, stride,
                 np.zeros((out_ch, in_ch, kernel)), np.zeros(out_ch))


def affine_layer(in_ch, out_ch) -> Layer:
    return Layer("affine", in_ch, 1, out_ch, 1, W=np.zeros((out_ch, in_ch)), b=np.zeros(out_ch))


def tanh_layer(ch, length) -> Layer:
    return Layer("tanh", ch, length, ch, length)


def pool_layer(ch, length) -> Layer:
    return Layer("pool", ch, length, ch, 1)


def build_encoder(
    input_dim: int,
    t: int,
    embedding_dim: int = 32,
    channels=(32, 32),
    kernels=(7, 5),
    strides=(2, 2),
    seed: int | np.random.Generator | None = 0,
) -> EncoderParams:
    """Default conv/tanh stack with Glorot-uniform initialisation."""
    if not (len(channels) == len(kernels) == len(strides)):
        raise ValueError("channels, kernels and strides must have equal length")
    layers = []
    ch, length = input_dim, t
    for out_ch, k, s in zip(channels, kernels, strides):
        conv = conv_layer(ch, length, out_ch, k, s)
        layers += [conv, tanh_layer(out_ch, conv.out_len)]
        ch, length = out_ch, conv.out_len
    layers += [pool_layer(ch, length), affine_layer(ch, embedding_dim)]
    params = EncoderParams(layers)
    init_params(params, seed)
    return params


def init_params(params: EncoderParams, seed=0) -> None:
    # biases share the weight range; all-zero biases would leave the odd
    # tanh stack blind to the even moments of zero-mean inputs
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for lay in params.layers:
        if not lay.has_params:
            continue
        k = max(lay.kernel, 1)
        limit = np.sqrt(6.0 / (lay.in_ch * k + lay.out_ch * k))
        lay.W[...] = rng.uniform(-limit, limit, lay.W.shape)
        lay.b[...] = rng.uniform(-limit, limit, lay.b.shape)


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class Tape:
    caches: list
    unit: np.ndarray
    norms: np.ndarray
    single: bool


def _conv_index(lay: Layer) -> np.ndarray:
    return lay.stride * np.arange(lay.out_len)[:, None] + np.arange(lay.kernel)[None, :]


def _conv_wflat(lay: Layer) -> np.ndarray:
    # (out, in, k) -> (out, k * in), matching patch layout (k, in)
    return lay.W.transpose(0, 2, 1).reshape(lay.out_ch, lay.kernel * lay.in_ch)


def _as_batch(params: EncoderParams, X) -> tuple[np.ndarray, bool]:
    if hasattr(X, "X"):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (params.input_dim, params.input_t):
        raise ShapeMismatch(f"clip shape {X.shape[-2:]} does not match encoder input "
                            f"({params.input_dim}, {params.input_t})")
    return X, single


def forward_batch(params: EncoderParams, X) -> tuple[np.ndarray, Tape]:
    """Embed a ``(B, dim, t)`` batch. Returns ``(B, d)`` unit rows and the tape."""
    X, single = _as_batch(params, X)
    h = X.transpose(0, 2, 1)  # (B, T, C)
    B = h.shape[0]
    caches = []
    for lay in params.layers:
        if lay.kind == "conv":
            patches = h[:, _conv_index(lay), :].reshape(B * lay.out_len, lay.kernel * lay.in_ch)
            h = (patches @ _conv_wflat(lay).T + lay.b).reshape(B, lay.out_len, lay.out_ch)
            caches.append(patches)
        elif lay.kind == "tanh":
            h = np.tanh(h)
            caches.append(h)
        elif lay.kind == "pool":
            h = h.mean(axis=1)
            caches.append(None)
        elif lay.kind == "affine":
            caches.append(h)
            h = h @ lay.W.T + lay.b
        else:
            raise ShapeMismatch(f"unknown layer kind {lay.kind!r}")
    unit, norms = normalize_rows(h)
    return unit, Tape(caches, unit, norms, single)


def encoder_forward(params: EncoderParams, X) -> tuple[np.ndarray, Tape]:
    """Embed one clip (or a batch). A single ``dim x t`` clip gives a d-vector."""
    unit, tape = forward_batch(params, X)
    return (unit[0] if tape.single else unit), tape


def encoder_backward(params: EncoderParams, tape: Tape, grad_embedding) -> EncoderParams:
    """Reverse-mode gradient of the forward map, shaped like ``params``."""
    g = np.asarray(grad_embedding, dtype=np.float64)
    if g.ndim == 1:
        g = g[None]
    if g.shape != tape.unit.shape:
        raise ShapeMismatch(f"upstream gradient {g.shape} vs embeddings {tape.unit.shape}")
    grads = params.zeros_like()
    g = normalize_backward(tape.unit, tape.norms, g)
    B = g.shape[0]
    for idx in range(len(params.layers) - 1, -1, -1):
        lay, cache, out = params.layers[idx], tape.caches[idx], grads.layers[idx]
        first = idx == 0
        if lay.kind == "affine":
            out.W[...] = g.T @ cache
            out.b[...] = g.sum(axis=0)
            g = g @ lay.W
        elif lay.kind == "pool":
            g = np.broadcast_to(g[:, None, :] / lay.in_len, (B, lay.in_len, lay.in_ch))
        elif lay.kind == "tanh":
            g = g * (1.0 - cache * cache)
        elif lay.kind == "conv":
            gf = g.reshape(B * lay.out_len, lay.out_ch)
            dWf = gf.T @ cache
            out.W[...] = dWf.reshape(lay.out_ch, lay.kernel, lay.in_ch).transpose(0, 2, 1)
            out.b[...] = gf.sum(axis=0)
            if first:
                break
            dp = (gf @ _conv_wflat(lay)).reshape(B, lay.out_len, lay.kernel, lay.in_ch)
            dh = np.zeros((B, lay.in_len, lay.in_ch))
            span = lay.stride * (lay.out_len - 1) + 1
            for j in range(lay.kernel):
                dh[:, j : j + span : lay.stride, :] += dp[:, :, j, :]
            g = dh
    return grads


# --------------------------------------------------------------------------
# checkpoint file

_LAYER = struct.Struct("<B6I")


def encode_checkpoint(params: EncoderParams, config_text: str = "") -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.layers)))
    for lay in params.layers:
        buf.write(_LAYER.pack(KINDS.index(lay.kind), lay.in_ch, lay.in_len, lay.out_ch,
                              lay.out_len, lay.kernel, lay.stride))
        if lay.has_params:
            buf.write(np.ascontiguousarray(lay.W, dtype="<f8").tobytes())
            buf.write(np.ascontiguousarray(lay.b, dtype="<f8").tobytes())
    text = config_text.encode("utf-8")
    buf.write(struct.pack("<II", params.embedding_dim, len(text)))
    buf.write(text)
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes, where):
        self.data, self.pos, self.where = data, 0, where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayload(f"{self.where}: truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct | str):
        st = st if isinstance(st, struct.Struct) else struct.Struct(st)
        return st.unpack(self.take(st.size))

    def f8(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    def done(self):
        if self.pos != len(self.data):
            raise TruncatedPayload(f"{self.where}: {len(self.data) - self.pos} trailing bytes")


def decode_checkpoint(data: bytes, where="<bytes>") -> tuple[EncoderParams, str]:
    r = _Reader(data, where)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise BadMagic(f"{where}: not an encoder checkpoint")
    version, count = r.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{where}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    layers = []
    for _ in range(count):
        tag, in_ch, in_len, out_ch, out_len, kernel, stride = r.unpack(_LAYER)
        if tag >= len(KINDS):
            raise BadMagic(f"{where}: unknown layer tag {tag}")
        lay = Layer(KINDS[tag], in_ch, in_len, out_ch, out_len, kernel, stride)
        if lay.kind == "conv":
            lay.W, lay.b = r.f8((out_ch, in_ch, kernel)), r.f8((out_ch,))
        elif lay.kind == "affine":
            lay.W, lay.b = r.f8((out_ch, in_ch)), r.f8((out_ch,))
        layers.append(lay)
    dim, text_len = r.unpack("<II")
    text = r.take(text_len).decode("utf-8")
    r.done()
    params = EncoderParams(layers)
    if dim != params.embedding_dim:
        raise ShapeMismatch(f"{where}: declared embedding_dim {dim}, layers give {params.embedding_dim}")
    return params, text


def save_checkpoint(params: EncoderParams, path, config_text: str = "") -> None:
    Path(path).write_bytes(encode_checkpoint(params, config_text))


def load_checkpoint(path) -> tuple[EncoderParams, str]:
    return decode_checkpoint(Path(path).read_bytes(), str(path))
