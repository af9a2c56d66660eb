"""Minimal float64 convolutional network with analytic backprop.

The network is a stack of same-padded (optionally dilated) conv+ReLU layers
shared by two 1x1 heads: a 2-channel policy head and a 1-channel value head.
Parameters live in one flat float64 vector; every layer is a view into it, so
optimizers and finite-difference checks can treat the whole network as a
single point in R^n.

Convolutions are computed tap by tap: a k x k kernel becomes k*k shifted
slices of the padded input, each contracted against a (C_in, C_out) matrix.
That keeps everything inside BLAS matmuls without an im2col blowup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class ConvSpec:
    kernel: int = 3
    channels: int = 32
    dilation: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.channels < 1 or self.dilation < 1:
            raise ValueError("channels and dilation must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetSpec:
    """Trunk layers plus the implied 2-channel policy / 1-channel value heads.

    Head weights are zero-initialized so an untrained policy is exactly
    uniform and the initial value estimate is exactly 0.
    """

    in_channels: int
    convs: tuple[ConvSpec, ...] = (
        ConvSpec(3, 32, 1), ConvSpec(3, 32, 2), ConvSpec(3, 32, 4),
        ConvSpec(3, 32, 1),
    )

    def __post_init__(self):
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if not self.convs:
            raise ValueError("at least one trunk layer is required")
        object.__setattr__(self, "convs", tuple(self.convs))

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "convs": [
                {"kernel": c.kernel, "channels": c.channels,
                 "dilation": c.dilation, "activation": c.activation}
                for c in self.convs
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetSpec":
        unknown = set(doc) - {"in_channels", "convs"}
        if unknown:
            raise ValueError(f"unknown net spec keys: {sorted(unknown)}")
        return cls(in_channels=int(doc["in_channels"]),
                   convs=tuple(ConvSpec(**c) for c in doc["convs"]))


def conv_same(x: np.ndarray, w: np.ndarray, dilation: int) -> np.ndarray:
    """Same-padded conv of (B, H, W, Cin) with (k, k, Cin, Cout) weights."""
    k = w.shape[0]
    half = (k // 2) * dilation
    _, h, wd, _ = x.shape
    if half == 0:
        return x @ w[0, 0]
    xp = np.pad(x, ((0, 0), (half, half), (half, half), (0, 0)))
    out = np.zeros(x.shape[:3] + (w.shape[3],), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            ys, xs = i * dilation, j * dilation
            out += xp[:, ys:ys + h, xs:xs + wd, :] @ w[i, j]
    return out


def conv_same_backward(x, w, dilation, dout):
    """Gradients (dx, dw, db) of conv_same under upstream dout."""
    k = w.shape[0]
    cin, cout = w.shape[2], w.shape[3]
    half = (k // 2) * dilation
    _, h, wd, _ = x.shape
    db = dout.sum(axis=(0, 1, 2))
    if half == 0:
        dw = np.zeros_like(w)
        dw[0, 0] = x.reshape(-1, cin).T @ dout.reshape(-1, cout)
        return dout @ w[0, 0].T, dw, db
    xp = np.pad(x, ((0, 0), (half, half), (half, half), (0, 0)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    flat_dout = dout.reshape(-1, cout)
    for i in range(k):
        for j in range(k):
            ys, xs = i * dilation, j * dilation
            patch = xp[:, ys:ys + h, xs:xs + wd, :]
            dw[i, j] = patch.reshape(-1, cin).T @ flat_dout
            dxp[:, ys:ys + h, xs:xs + wd, :] += dout @ w[i, j].T
    return dxp[:, half:half + h, half:half + wd, :], dw, db


def softmax_pair(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the trailing size-2 axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_pair(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Net:
    """Parameter layout and forward/backward for one NetSpec."""

    def __init__(self, spec: NetSpec):
        self.spec = spec
        self.layers = []  # (name, w_slice, w_shape, b_slice, dilation, activation)
        offset = 0
        c_in = spec.in_channels
        for i, c in enumerate(spec.convs):
            offset = self._add_layer(f"conv{i}", c.kernel, c_in, c.channels,
                                     c.dilation, c.activation, offset)
            c_in = c.channels
        offset = self._add_layer("policy_head", 1, c_in, 2, 1, "linear", offset)
        offset = self._add_layer("value_head", 1, c_in, 1, 1, "linear", offset)
        self.n_params = offset

    def _add_layer(self, name, k, c_in, c_out, dilation, activation, offset):
        w_shape = (k, k, c_in, c_out)
        w_size = k * k * c_in * c_out
        self.layers.append((name, slice(offset, offset + w_size), w_shape,
                            slice(offset + w_size, offset + w_size + c_out),
                            dilation, activation))
        return offset + w_size + c_out

    def unpack(self, params: np.ndarray) -> dict:
        if params.shape != (self.n_params,):
            raise ValueError(f"parameter vector must have length "
                             f"{self.n_params}, got {params.shape}")
        return {name: (params[ws].reshape(shape), params[bs])
                for name, ws, shape, bs, _, _ in self.layers}

    def init_params(self, seed: int) -> np.ndarray:
        """Fan-in-scaled uniform trunk weights, zero biases, zero heads."""
        rng = np.random.default_rng(seed)
        params = np.zeros(self.n_params, dtype=np.float64)
        for name, ws, shape, _bs, _d, _a in self.layers:
            if name.endswith("_head"):
                continue
            k, _, c_in, _ = shape
            bound = 1.0 / np.sqrt(k * k * c_in)
            params[ws] = rng.uniform(-bound, bound, ws.stop - ws.start)
        return params

    def forward(self, params, x, want_cache=False, check=False):
        """Run (B, H, W, in_channels) input to (logits, values[, cache])."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[3] != self.spec.in_channels:
            raise ValueError(f"input must be (B, H, W, {self.spec.in_channels}), "
                             f"got {x.shape}")
        weights = self.unpack(params)
        cache = {"inputs": {}, "pre": {}}
        feat = x
        for name, _ws, _shape, _bs, dilation, activation in self.layers:
            if name.endswith("_head"):
                continue
            w, b = weights[name]
            cache["inputs"][name] = feat
            pre = conv_same(feat, w, dilation) + b
            if check and not np.isfinite(pre).all():
                raise FloatingPointError(f"non-finite activation in {name}")
            cache["pre"][name] = pre
            feat = np.maximum(pre, 0.0) if activation == "relu" else pre
        heads = {}
        for name in ("policy_head", "value_head"):
            w, b = weights[name]
            cache["inputs"][name] = feat
            pre = conv_same(feat, w, 1) + b
            if check and not np.isfinite(pre).all():
                raise FloatingPointError(f"non-finite activation in {name}")
            heads[name] = pre
        logits, values = heads["policy_head"], heads["value_head"][..., 0]
        if want_cache:
            return logits, values, cache
        return logits, values

    def backward(self, params, cache, dlogits, dvalues) -> np.ndarray:
        """Backpropagate head gradients to a flat parameter gradient."""
        weights = self.unpack(params)
        grad = np.zeros(self.n_params, dtype=np.float64)
        trunk = [l for l in self.layers if not l[0].endswith("_head")]
        heads = {l[0]: l for l in self.layers if l[0].endswith("_head")}

        d_trunk = None
        for name, upstream in (("policy_head", dlogits),
                               ("value_head", dvalues[..., None])):
            _, ws, shape, bs, dilation, _ = heads[name]
            w, _b = weights[name]
            dx, dw, db = conv_same_backward(cache["inputs"][name], w,
                                            dilation, upstream)
            grad[ws] = dw.ravel()
            grad[bs] = db
            d_trunk = dx if d_trunk is None else d_trunk + dx
        for name, ws, shape, bs, dilation, activation in reversed(trunk):
            w, _b = weights[name]
            if activation == "relu":
                d_trunk = d_trunk * (cache["pre"][name] > 0)
            dx, dw, db = conv_same_backward(cache["inputs"][name], w,
                                            dilation, d_trunk)
            grad[ws] = dw.ravel()
            grad[bs] = db
            d_trunk = dx
        return grad


def save_checkpoint(path, params, spec: NetSpec, seed: int, steps: int) -> None:
    """JSON header line followed by the little-endian float32 parameter block."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "net": spec.to_dict(),
        "seed": int(seed),
        "steps": int(steps),
        "param_count": int(np.asarray(params).size),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.asarray(params, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        block = fh.read()
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version "
                         f"{header.get('format_version')!r}")
    params = np.frombuffer(block, dtype="<f4").astype(np.float64)
    if params.size != header["param_count"]:
        raise ValueError(f"checkpoint truncated: expected "
                         f"{header['param_count']} parameters, got {params.size}")
    return params, header
