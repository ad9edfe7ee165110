"""Minimal neural-network engine with reverse-mode gradients.

Every evaluation is batched over an ensemble axis: parameters are an
``(N, P)`` array (one flat vector per model) and inputs are ``(N, B, D)`` or
``(1, B, D)`` (shared by all models). A forward pass records a tape of
per-layer caches; the backward pass walks it in reverse and returns the
gradient with respect to the inputs and/or the flat parameters.

Flat inputs use channel-major order (``C, H, W``), as in CIFAR records.
Image activations are kept channels-last internally.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .tensor import SeededRng, read_matrix_bin, write_matrix_bin

GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


# ---------------------------------------------------------------------------
# architecture description


@dataclass(frozen=True)
class Dense:
    out: int
    std: float | None = None
    bias: bool = False


@dataclass(frozen=True)
class Conv2d:
    out: int
    kernel: int
    stride: int = 1
    padding: int = 0
    std: float | None = None
    bias: bool = False


@dataclass(frozen=True)
class Conv1d:
    out: int
    kernel: int
    stride: int = 1
    padding: int = 0
    std: float | None = None
    bias: bool = False


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class GELU:
    pass


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class ResidualBlock:
    layers: tuple = ()


Layer = Dense | Conv2d | Conv1d | ReLU | GELU | GlobalAvgPool | Flatten | ResidualBlock


@dataclass(frozen=True)
class ModelSpec:
    """Input shape (``(D,)``, ``(C, L)`` or ``(C, H, W)``) and an ordered layer list."""

    input_shape: tuple
    layers: tuple
    name: str = field(default="model", compare=False)

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))


class SpecError(ValueError):
    pass


_LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2d,
    "conv1d": Conv1d,
    "relu": ReLU,
    "gelu": GELU,
    "global_avg_pool": GlobalAvgPool,
    "flatten": Flatten,
    "residual": ResidualBlock,
}
_TYPE_NAMES = {v: k for k, v in _LAYER_TYPES.items()}


def _layer_to_dict(layer) -> dict:
    d: dict[str, Any] = {"type": _TYPE_NAMES[type(layer)]}
    if isinstance(layer, ResidualBlock):
        d["layers"] = [_layer_to_dict(l) for l in layer.layers]
    else:
        d.update({k: v for k, v in asdict(layer).items() if v is not None})
    return d


def _layer_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _LAYER_TYPES:
        raise SpecError(f"unknown layer type {kind!r}")
    if kind == "residual":
        return ResidualBlock(tuple(_layer_from_dict(l) for l in d.get("layers", [])))
    try:
        return _LAYER_TYPES[kind](**d)
    except TypeError as exc:
        raise SpecError(f"bad fields for {kind}: {exc}") from None


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "name": spec.name,
        "input_shape": list(spec.input_shape),
        "layers": [_layer_to_dict(l) for l in spec.layers],
    }


def spec_from_dict(d: dict) -> ModelSpec:
    try:
        shape = tuple(int(s) for s in d["input_shape"])
        layers = tuple(_layer_from_dict(l) for l in d["layers"])
    except KeyError as exc:
        raise SpecError(f"model spec missing {exc}") from None
    spec = ModelSpec(shape, layers, d.get("name", "model"))
    compile_spec(spec)
    return spec


def load_spec(path) -> ModelSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def save_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


# ---------------------------------------------------------------------------
# compiled layers


class _Node:
    n_params = 0
    std: np.ndarray | None = None

    def forward(self, w, x):
        raise NotImplementedError

    def backward(self, w, cache, gy, want_w):
        raise NotImplementedError


class _DenseNode(_Node):
    def __init__(self, layer: Dense, din: int):
        self.din, self.dout, self.bias = din, layer.out, layer.bias
        self.n_params = din * layer.out + (layer.out if layer.bias else 0)
        std = layer.std if layer.std is not None else 1.0 / math.sqrt(din)
        self.std = np.concatenate(
            [np.full(din * layer.out, std), np.zeros(layer.out if layer.bias else 0)]
        )

    def _split(self, w):
        n = w.shape[0]
        k = self.din * self.dout
        return w[:, :k].reshape(n, self.din, self.dout), (w[:, k:] if self.bias else None)

    def forward(self, w, x):
        W, b = self._split(w)
        y = x @ W
        if b is not None:
            y = y + b[:, None, :]
        return y, x

    def backward(self, w, x, gy, want_w):
        W, _ = self._split(w)
        gx = gy @ W.transpose(0, 2, 1)
        if not want_w:
            return gx, None
        gW = x.transpose(0, 2, 1) @ gy
        parts = [np.broadcast_to(gW, (gy.shape[0],) + gW.shape[1:]).reshape(gy.shape[0], -1)]
        if self.bias:
            parts.append(gy.sum(axis=1))
        return gx, np.concatenate(parts, axis=1)


class _ConvNode(_Node):
    """Convolution over channels-last images via im2col."""

    def __init__(self, layer, in_shape: tuple, one_d: bool):
        h, wd, cin = in_shape
        k = layer.kernel
        self.kh, self.kw = (1, k) if one_d else (k, k)
        self.ph, self.pw = (0, layer.padding) if one_d else (layer.padding, layer.padding)
        self.s = layer.stride
        self.cin, self.cout, self.bias = cin, layer.out, layer.bias
        self.h, self.w = h, wd
        self.ho = (h + 2 * self.ph - self.kh) // self.s + 1
        self.wo = (wd + 2 * self.pw - self.kw) // self.s + 1
        if self.ho < 1 or self.wo < 1 or self.s < 1:
            raise SpecError(f"kernel {k} does not fit input {h}x{wd} with padding {layer.padding}")
        self.K = self.kh * self.kw * cin
        self.n_params = self.K * self.cout + (self.cout if self.bias else 0)
        std = layer.std if layer.std is not None else 1.0 / math.sqrt(self.K)
        self.std = np.concatenate(
            [np.full(self.K * self.cout, std), np.zeros(self.cout if self.bias else 0)]
        )
        self.out_shape = (self.ho, self.wo, self.cout)

    def _split(self, w):
        n = w.shape[0]
        k = self.K * self.cout
        return w[:, :k].reshape(n, self.K, self.cout), (w[:, k:] if self.bias else None)

    def _windows(self, xp):
        s, ho, wo = self.s, self.ho, self.wo
        for a in range(self.kh):
            for b in range(self.kw):
                yield a, b, (slice(a, a + s * (ho - 1) + 1, s), slice(b, b + s * (wo - 1) + 1, s))

    def forward(self, w, x):
        n, bsz = x.shape[:2]
        if self.ph or self.pw:
            x = np.pad(x, ((0, 0), (0, 0), (self.ph, self.ph), (self.pw, self.pw), (0, 0)))
        cols = np.concatenate([x[:, :, si, sj, :] for _, _, (si, sj) in self._windows(x)], axis=-1)
        cols = cols.reshape(n, bsz * self.ho * self.wo, self.K)
        W, b = self._split(w)
        y = cols @ W
        if b is not None:
            y = y + b[:, None, :]
        nn_ = y.shape[0]
        return y.reshape(nn_, bsz, self.ho, self.wo, self.cout), (cols, bsz)

    def backward(self, w, cache, gy, want_w):
        cols, bsz = cache
        n = gy.shape[0]
        W, _ = self._split(w)
        g2 = gy.reshape(n, bsz * self.ho * self.wo, self.cout)
        gcols = (g2 @ W.transpose(0, 2, 1)).reshape(n, bsz, self.ho, self.wo, self.kh * self.kw, self.cin)
        gxp = np.zeros((n, bsz, self.h + 2 * self.ph, self.w + 2 * self.pw, self.cin))
        for idx, (_, _, (si, sj)) in enumerate(self._windows(gxp)):
            gxp[:, :, si, sj, :] += gcols[:, :, :, :, idx, :]
        gx = gxp[:, :, self.ph : self.ph + self.h, self.pw : self.pw + self.w, :]
        if not want_w:
            return gx, None
        gW = cols.transpose(0, 2, 1) @ g2
        parts = [np.broadcast_to(gW, (n,) + gW.shape[1:]).reshape(n, -1)]
        if self.bias:
            parts.append(g2.sum(axis=1))
        return gx, np.concatenate(parts, axis=1)


class _ReLUNode(_Node):
    def forward(self, w, x, frozen=None):
        mask = x > 0 if frozen is None else frozen
        return x * mask, mask

    def backward(self, w, mask, gy, want_w):
        return gy * mask, None


class _GELUNode(_Node):
    def forward(self, w, x):
        inner = GELU_C * (x + GELU_A * x**3)
        t = np.tanh(inner)
        return 0.5 * x * (1.0 + t), (x, t)

    def backward(self, w, cache, gy, want_w):
        x, t = cache
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
        return gy * d, None


class _GAPNode(_Node):
    def forward(self, w, x):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, w, shape, gy, want_w):
        h, wd = shape[2], shape[3]
        g = gy[:, :, None, None, :] / (h * wd)
        return np.broadcast_to(g, (gy.shape[0],) + shape[1:]), None


class _FlattenNode(_Node):
    def forward(self, w, x):
        n, b = x.shape[:2]
        return x.transpose(0, 1, 4, 2, 3).reshape(n, b, -1), x.shape

    def backward(self, w, shape, gy, want_w):
        n, b, h, wd, c = (gy.shape[0],) + shape[1:]
        return gy.reshape(n, b, c, h, wd).transpose(0, 1, 3, 4, 2), None


class _ResidualNode(_Node):
    def __init__(self, seq: "_Sequence"):
        self.seq = seq
        self.n_params = seq.n_params
        self.std = seq.std

    def forward(self, w, x, frozen=None):
        y, tape = self.seq.forward(w, x, frozen)
        return x + y, tape

    def backward(self, w, tape, gy, want_w):
        gx, gw = self.seq.backward(w, tape, gy, want_w)
        return gy + gx, gw


class _Sequence:
    def __init__(self, layers: Sequence, in_shape: tuple):
        self.nodes: list[_Node] = []
        self.offsets: list[int] = []
        shape = in_shape
        total = 0
        for layer in layers:
            node, shape = _build(layer, shape)
            self.nodes.append(node)
            self.offsets.append(total)
            total += node.n_params
        self.n_params = total
        self.out_shape = shape
        stds = [n.std for n in self.nodes if n.n_params]
        self.std = np.concatenate(stds) if stds else np.zeros(0)

    def forward(self, w, x, frozen=None):
        """Run the layers; ``frozen`` is a reference tape whose ReLU masks are reused."""
        tape = []
        for i, (node, off) in enumerate(zip(self.nodes, self.offsets)):
            wi = w[:, off : off + node.n_params]
            if frozen is not None and isinstance(node, (_ReLUNode, _ResidualNode)):
                x, cache = node.forward(wi, x, frozen[i])
            else:
                x, cache = node.forward(wi, x)
            tape.append(cache)
        return x, tape

    def backward(self, w, tape, gy, want_w):
        n = gy.shape[0]
        gw = np.zeros((n, self.n_params)) if want_w else None
        for node, off, cache in zip(reversed(self.nodes), reversed(self.offsets), reversed(tape)):
            gy, g = node.backward(w[:, off : off + node.n_params], cache, gy, want_w)
            if want_w and g is not None:
                gw[:, off : off + node.n_params] += g
        return gy, gw


def _build(layer, shape: tuple):
    """Return ``(node, out_shape)``; shapes are ``("flat", D)`` or ``("img", H, W, C)``."""
    kind = shape[0]
    if isinstance(layer, Dense):
        if kind != "flat":
            raise SpecError("Dense needs a flat input; insert Flatten or GlobalAvgPool")
        return _DenseNode(layer, shape[1]), ("flat", layer.out)
    if isinstance(layer, (Conv1d, Conv2d)):
        if kind != "img":
            raise SpecError(f"{type(layer).__name__} needs an image input")
        if isinstance(layer, Conv1d) and shape[1] != 1:
            raise SpecError("Conv1d needs a (C, L) input")
        node = _ConvNode(layer, shape[1:], isinstance(layer, Conv1d))
        return node, ("img",) + node.out_shape
    if isinstance(layer, ReLU):
        return _ReLUNode(), shape
    if isinstance(layer, GELU):
        return _GELUNode(), shape
    if isinstance(layer, GlobalAvgPool):
        if kind != "img":
            raise SpecError("GlobalAvgPool needs an image input")
        return _GAPNode(), ("flat", shape[3])
    if isinstance(layer, Flatten):
        if kind == "flat":
            raise SpecError("Flatten needs an image input")
        return _FlattenNode(), ("flat", shape[1] * shape[2] * shape[3])
    if isinstance(layer, ResidualBlock):
        seq = _Sequence(layer.layers, shape)
        if seq.out_shape != shape:
            raise SpecError(f"residual block maps {shape} to {seq.out_shape}")
        return _ResidualNode(seq), shape
    raise SpecError(f"unsupported layer {layer!r}")


class Net:
    """A compiled :class:`ModelSpec`; evaluation is batched over models."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        shape = tuple(spec.input_shape)
        if len(shape) == 1:
            self.in_shape = ("flat", shape[0])
        elif len(shape) == 2:
            self.in_shape = ("img", 1, shape[1], shape[0])
        elif len(shape) == 3:
            self.in_shape = ("img", shape[1], shape[2], shape[0])
        else:
            raise SpecError(f"bad input shape {shape}")
        if any(s < 1 for s in shape):
            raise SpecError(f"bad input shape {shape}")
        self.input_dim = int(np.prod(shape))
        self.body = _Sequence(spec.layers, self.in_shape)
        if self.body.out_shape != ("flat", 1):
            raise SpecError(f"model output must be a scalar, got {self.body.out_shape}")
        self.n_params = self.body.n_params
        self.init_std = self.body.std

    # layout helpers
    def layout(self) -> list[tuple[str, int, int]]:
        rows = []
        for i, (node, off) in enumerate(zip(self.body.nodes, self.body.offsets)):
            if node.n_params:
                rows.append((f"{i}:{type(node).__name__.strip('_').replace('Node', '')}", off, node.n_params))
        return rows

    def readout_slice(self) -> slice:
        """Parameters of the last weighted layer, provided only linear maps follow it.

        Negating them negates the logit, which is what antithetic sampling uses.
        """
        nodes = self.body.nodes
        last = max((i for i, n in enumerate(nodes) if n.n_params), default=None)
        if last is None or isinstance(nodes[last], _ResidualNode):
            raise SpecError("model has no plain readout layer")
        if any(not isinstance(n, (_GAPNode, _FlattenNode)) for n in nodes[last + 1 :]):
            raise SpecError("a nonlinearity follows the readout layer")
        off = self.body.offsets[last]
        return slice(off, off + nodes[last].n_params)

    def _to_internal(self, x):
        if self.in_shape[0] == "flat":
            return x
        _, h, w, c = self.in_shape
        n, b = x.shape[:2]
        return x.reshape(n, b, c, h, w).transpose(0, 1, 3, 4, 2)

    def _from_internal(self, g):
        if self.in_shape[0] == "flat":
            return g
        n, b = g.shape[:2]
        return g.transpose(0, 1, 4, 2, 3).reshape(n, b, -1)

    def _prep(self, params, x):
        params = np.asarray(params, dtype=np.float64)
        if params.ndim != 2 or params.shape[1] != self.n_params:
            raise ValueError(f"params must be (N, {self.n_params}), got {params.shape}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ValueError(f"inputs must be (N, B, {self.input_dim}), got {x.shape}")
        if x.shape[0] not in (1, params.shape[0]):
            raise ValueError("input ensemble axis must be 1 or match params")
        return params, x

    def forward(self, params, x, keep_tape: bool = False, frozen=None):
        """Logits ``(N, B)``; with ``keep_tape`` also the tape for :meth:`backward`.

        ``frozen`` is a tape from an earlier call on the same inputs; its ReLU
        activation pattern is reused instead of recomputed.
        """
        params, x = self._prep(params, x)
        y, tape = self.body.forward(params, self._to_internal(x), frozen)
        out = np.broadcast_to(y[..., 0], (params.shape[0], x.shape[1]))
        return (out, tape) if keep_tape else out.copy()

    def backward(self, params, tape, gout, inputs: bool = True, weights: bool = True):
        """Pull ``gout`` (shape ``(N, B)``) back through a recorded tape.

        Input gradients are per sample ``(N, B, D)``; parameter gradients are
        summed over the batch ``(N, P)``.
        """
        params = np.asarray(params, dtype=np.float64)
        gx, gw = self.body.backward(params, tape, np.asarray(gout, dtype=np.float64)[..., None], weights)
        if inputs:
            gx = self._from_internal(np.broadcast_to(gx, (params.shape[0],) + gx.shape[1:]))
        return (gx if inputs else None), gw

    def input_grads(self, params, x, frozen=None) -> np.ndarray:
        out, tape = self.forward(params, x, keep_tape=True, frozen=frozen)
        gx, _ = self.backward(params, tape, np.ones(out.shape), inputs=True, weights=False)
        return np.ascontiguousarray(gx)

    def param_grads(self, params, x, weights_per_sample) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(logits, sum_b w_b * grad_theta f(x_b))`` per model."""
        out, tape = self.forward(params, x, keep_tape=True)
        _, gw = self.backward(params, tape, weights_per_sample(out.copy()), inputs=False, weights=True)
        return out.copy(), gw

    def mixed_dvp(self, params, x, v, eps: float = 1e-4, allow_zero: bool = False) -> np.ndarray:
        """Central-difference estimate of ``d/dtheta grad_x f . v`` per model, shape ``(N, B, D)``.

        ReLU activation patterns are frozen at ``params`` for both shifted
        evaluations, so a step never straddles a kink and the result is the
        almost-everywhere derivative (exact up to rounding for piecewise-linear
        nets). With ``allow_zero`` a zero direction yields zeros instead of an
        error.
        """
        if not eps > 0:
            raise ValueError("eps must be positive")
        params = np.asarray(params, dtype=np.float64)
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(nv == 0) and not allow_zero:
            raise ValueError("direction must be nonzero")
        u = v / np.where(nv == 0, 1.0, nv)
        _, ref = self.forward(params, x, keep_tape=True)
        gp = self.input_grads(params + eps * u, x, frozen=ref)
        gm = self.input_grads(params - eps * u, x, frozen=ref)
        out = (gp - gm) * (nv[:, :, None] / (2.0 * eps))
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite mixed derivative")
        return out


@lru_cache(maxsize=64)
def compile_spec(spec: ModelSpec) -> Net:
    return Net(spec)


def _net(spec) -> Net:
    return spec if isinstance(spec, Net) else compile_spec(spec)


# ---------------------------------------------------------------------------
# single-model API


def init_params(spec, rng: SeededRng) -> np.ndarray:
    """One flat parameter vector; weights i.i.d. N(0, std^2) per layer, biases zero."""
    net = _net(spec)
    return rng.generator().standard_normal(net.n_params) * net.init_std


def init_ensemble(spec, seed: int, n: int, start: int = 0) -> np.ndarray:
    """Parameters of replicas ``start .. start+n-1`` drawn from their own streams."""
    net = _net(spec)
    base = SeededRng(seed)
    out = np.empty((n, net.n_params))
    for i in range(n):
        out[i] = init_params(net, replica_rng(base, start + i).child(0))
    return out


def replica_rng(base: SeededRng, index: int) -> SeededRng:
    return base.child(index)


def save_params(path, params) -> None:
    """Write one vector or an ``(N, P)`` stack in the raw binary matrix format."""
    write_matrix_bin(path, np.atleast_2d(np.asarray(params, dtype=np.float64)))


def load_params(path, spec) -> np.ndarray:
    """Read parameters saved by :func:`save_params`, checking them against ``spec``."""
    p = read_matrix_bin(path)
    n_params = _net(spec).n_params
    if p.shape[1] != n_params:
        raise ValueError(f"{path}: {p.shape[1]} parameters per row, spec needs {n_params}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{path}: non-finite parameters")
    return p[0] if p.shape[0] == 1 else p


def _single(params, x):
    params = np.asarray(params, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(1, 1, -1)
    return params[None, :], x


def forward(spec, params, x) -> float:
    p, xx = _single(params, x)
    return float(_net(spec).forward(p, xx)[0, 0])


def input_gradient(spec, params, x) -> np.ndarray:
    p, xx = _single(params, x)
    return _net(spec).input_grads(p, xx)[0, 0].copy()


def param_gradient(spec, params, x) -> np.ndarray:
    p, xx = _single(params, x)
    _, g = _net(spec).param_grads(p, xx, np.ones_like)
    return g[0]


def mixed_dvp(spec, params, x, v, eps: float = 1e-4) -> np.ndarray:
    p, xx = _single(params, x)
    return _net(spec).mixed_dvp(p, xx, np.asarray(v)[None, :], eps)[0, 0]


# ---------------------------------------------------------------------------
# reference architectures


def mlp(dim: int, widths: Sequence[int], act: str = "relu", sigma_hidden: float | None = None,
        sigma_out: float | None = None, name: str = "mlp") -> ModelSpec:
    act_layer = ReLU() if act == "relu" else GELU()
    layers: list = []
    for w in widths:
        layers += [Dense(w, std=sigma_hidden), act_layer]
    layers.append(Dense(1, std=sigma_out))
    return ModelSpec((dim,), tuple(layers), name)


def linear_model(dim: int, std: float = 1.0) -> ModelSpec:
    return ModelSpec((dim,), (Dense(1, std=std),), "linear")


def conv_pool_linear(input_shape: tuple, kernel: int, channels: int, sigma_phi: float = 1.0,
                     sigma_omega: float = 1.0, stride: int = 1) -> ModelSpec:
    """Linear conv layer, global average pooling, scalar readout."""
    conv = Conv1d if len(input_shape) == 2 else Conv2d
    layers = (conv(channels, kernel, stride, 0, std=sigma_phi), GlobalAvgPool(), Dense(1, std=sigma_omega))
    return ModelSpec(tuple(input_shape), layers, "convpool")


def appendix_example(sigma_theta: float = 1.0) -> ModelSpec:
    """Single-kernel Conv1d (k=2) on three inputs followed by average pooling."""
    return ModelSpec((1, 3), (Conv1d(1, 2, std=sigma_theta), GlobalAvgPool()), "appendix-example")


def mini_resnet(input_shape: tuple = (3, 8, 8), channels: int = 8, act: str = "relu") -> ModelSpec:
    a = ReLU() if act == "relu" else GELU()
    layers = (
        Conv2d(channels, 3, 1, 1),
        a,
        ResidualBlock((Conv2d(channels, 3, 1, 1), a, Conv2d(channels, 3, 1, 1))),
        a,
        GlobalAvgPool(),
        Dense(1),
    )
    return ModelSpec(tuple(input_shape), layers, "mini-resnet")


def small_cnn(input_shape: tuple = (3, 8, 8), channels: int = 8, act: str = "relu") -> ModelSpec:
    """Two 3x3 convolutions with global pooling; the plain conv-pool baseline."""
    a = ReLU() if act == "relu" else GELU()
    layers = (Conv2d(channels, 3, 1, 1), a, Conv2d(channels, 3, 1, 1), a, GlobalAvgPool(), Dense(1))
    return ModelSpec(tuple(input_shape), layers, "conv-pool")


REFERENCE_SPECS = {
    "mini-resnet": mini_resnet,
    "conv-pool": small_cnn,
}
