"""Minimal from-scratch network toolkit: conv / relu / maxpool / dense layers,
softmax cross-entropy, SGD with momentum, finite-difference gradient checks,
and a binary checkpoint container.

Layers operate on batched arrays (N, C, H, W); dense layers flatten whatever
they receive. Convolutions are valid-mode cross-correlations with stride 1 and
no padding, pooling is disjoint 2x2 max. Parameters live in float32; clone a
network to float64 for verification work.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container as _c

CHECKPOINT_MAGIC = b"GTXN"
CHECKPOINT_VERSION = 1


def _im2col(x: np.ndarray, kh: int, kw: int) -> tuple[np.ndarray, int, int]:
    n, c = x.shape[0], x.shape[1]
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = v.shape[2], v.shape[3]
    cols = v.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


class Conv2d:
    """Valid cross-correlation, stride 1, per-output-channel bias."""

    kind = "conv"

    def __init__(self, in_channels: int, out_channels: int, kernel: int | tuple[int, int],
                 rng: np.random.Generator | None = None, dtype=np.float32):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kh, self.kw = kh, kw
        fan_in = in_channels * kh * kw
        fan_out = out_channels * kh * kw
        a = np.sqrt(6.0 / (fan_in + fan_out))
        rng = rng or np.random.default_rng(0)
        self.weight = rng.uniform(-a, a, size=(out_channels, in_channels, kh, kw)).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        c, h, w = in_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        if h < self.kh or w < self.kw:
            raise ValueError(f"input {h}x{w} smaller than kernel {self.kh}x{self.kw}")
        return (self.out_channels, h - self.kh + 1, w - self.kw + 1)

    def forward(self, x: np.ndarray, train: bool = False, capture=None) -> np.ndarray:
        self.output_shape(x.shape[1:])
        cols, ho, wo = _im2col(x, self.kh, self.kw)
        w2 = self.weight.reshape(self.out_channels, -1)
        y = np.matmul(w2, cols) + self.bias[None, :, None]
        if train:
            self._cache = (cols, x.shape)
        return y.reshape(x.shape[0], self.out_channels, ho, wo)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        cols, x_shape = self._cache
        n, _, ho, wo = dout.shape
        d2 = dout.reshape(n, self.out_channels, ho * wo)
        dw2 = np.matmul(d2, cols.transpose(0, 2, 1)).sum(axis=0)
        self.grads = {
            "weight": dw2.reshape(self.weight.shape),
            "bias": dout.sum(axis=(0, 2, 3)),
        }
        dcols = np.matmul(self.weight.reshape(self.out_channels, -1).T, d2)
        dcols = dcols.reshape(n, x_shape[1], self.kh, self.kw, ho, wo)
        dx = np.zeros(x_shape, dtype=dout.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, i, j]
        return dx


class ReLU:
    kind = "relu"

    def __init__(self):
        self._mask = None
        self.grads: dict[str, np.ndarray] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, train: bool = False, capture=None):
        if capture is not None:
            capture.append(x.copy())
        mask = x > 0
        if train:
            self._mask = mask
        return np.where(mask, x, 0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0)


class MaxPool2x2:
    """Disjoint 2x2 max pooling; spatial dims must be even. Gradient routes to
    the first maximal element in row-major window order."""

    kind = "maxpool"

    def __init__(self):
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x, train: bool = False, capture=None):
        n, c, h, w = x.shape
        self.output_shape(x.shape[1:])
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        windows = windows.reshape(n, c, h // 2, w // 2, 4)
        idx = np.argmax(windows, axis=-1)
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (idx, x.shape)
        return y

    def backward(self, dout):
        idx, (n, c, h, w) = self._cache
        dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
        dwin = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dwin.reshape(n, c, h, w)


class Dense:
    """Affine map on the flattened input."""

    kind = "fc"

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        a = np.sqrt(6.0 / (in_features + out_features))
        rng = rng or np.random.default_rng(0)
        self.weight = rng.uniform(-a, a, size=(out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, in_shape):
        n = int(np.prod(in_shape))
        if n != self.in_features:
            raise ValueError(f"dense expects {self.in_features} inputs, got {n} from {in_shape}")
        return (self.out_features,)

    def forward(self, x, train: bool = False, capture=None):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.in_features:
            raise ValueError(f"dense expects {self.in_features} inputs, got {x2.shape[1]}")
        y = x2 @ self.weight.T + self.bias
        if train:
            self._cache = (x2, x.shape)
        return y

    def backward(self, dout):
        x2, x_shape = self._cache
        self.grads = {"weight": dout.T @ x2, "bias": dout.sum(axis=0)}
        return (dout @ self.weight).reshape(x_shape)


class ConcatPaths:
    """Two parallel layer stacks whose outputs are concatenated along channels.

    Takes a pair (x_a, x_b); both paths must yield matching spatial dims.
    """

    kind = "concat"

    def __init__(self, path_a: list, path_b: list):
        self.path_a = path_a
        self.path_b = path_b
        self._split = None
        self.grads: dict[str, np.ndarray] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for tag, path in (("a", self.path_a), ("b", self.path_b)):
            for i, layer in enumerate(path):
                for pname, arr in layer.params().items():
                    out[f"{tag}.{i}.{pname}"] = arr
        return out

    def output_shape(self, in_shapes):
        sa, sb = in_shapes
        for layer in self.path_a:
            sa = layer.output_shape(sa)
        for layer in self.path_b:
            sb = layer.output_shape(sb)
        if sa[1:] != sb[1:]:
            raise ValueError(f"path outputs {sa} and {sb} differ spatially")
        return (sa[0] + sb[0],) + sa[1:]

    def forward(self, x, train: bool = False, capture=None):
        xa, xb = x
        for layer in self.path_a:
            xa = layer.forward(xa, train=train, capture=capture)
        for layer in self.path_b:
            xb = layer.forward(xb, train=train, capture=capture)
        if xa.shape[2:] != xb.shape[2:]:
            raise ValueError(f"path outputs {xa.shape} and {xb.shape} differ spatially")
        if train:
            self._split = xa.shape[1]
        return np.concatenate([xa, xb], axis=1)

    def backward(self, dout):
        da, db = dout[:, :self._split], dout[:, self._split:]
        for layer in reversed(self.path_a):
            da = layer.backward(da)
        for layer in reversed(self.path_b):
            db = layer.backward(db)
        return (da, db)


class Network:
    """Ordered layer stack with named parameters.

    input_shapes holds one (C, H, W) tuple per network input; two-input nets
    (a ConcatPaths head) take a pair of arrays. ``arch`` tags checkpoints.
    """

    def __init__(self, layers: list, arch: str = "custom",
                 input_shapes: tuple = (), fully_convolutional: bool = False):
        self.layers = layers
        self.arch = arch
        self.input_shapes = tuple(tuple(s) for s in input_shapes)
        self.fully_convolutional = fully_convolutional

    @property
    def takes_pair(self) -> bool:
        return len(self.input_shapes) == 2

    def forward(self, x, train: bool = False, capture=None):
        x, single = self._promote(x)
        for layer in self.layers:
            x = layer.forward(x, train=train, capture=capture)
        return x[0] if single else x

    def _promote(self, x):
        if self.takes_pair:
            xa, xb = x
            xa, xb = np.asarray(xa), np.asarray(xb)
            if xa.ndim == 3:
                return (xa[None], xb[None]), True
            return (xa, xb), False
        x = np.asarray(x)
        if x.ndim == 3:
            return x[None], True
        return x, False

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConcatPaths):
                for name, arr in layer.named_params().items():
                    out[f"{i}.{name}"] = arr
            else:
                for pname, arr in layer.params().items():
                    out[f"{i}.{pname}"] = arr
        return out

    @property
    def param_count(self) -> int:
        return sum(a.size for a in self.named_params().values())

    def output_shape(self):
        shape = self.input_shapes[0] if not self.takes_pair else self.input_shapes
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def clone(self, dtype=None) -> "Network":
        net = copy.deepcopy(self)
        if dtype is not None:
            for arr_name, arr in net.named_params().items():
                _assign_param(net, arr_name, arr.astype(dtype))
        return net


def _assign_param(net: Network, name: str, value: np.ndarray) -> None:
    parts = name.split(".")
    layer = net.layers[int(parts[0])]
    i = 1
    while parts[i] in ("a", "b"):
        layer = getattr(layer, "path_" + parts[i])[int(parts[i + 1])]
        i += 2
    setattr(layer, parts[i], value)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable exp-normalization."""
    z = np.asarray(z)
    if z.dtype != np.float64:
        z = z.astype(np.float64)
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient wrt the logits."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n = logits.shape[0]
    p = softmax(logits, axis=1)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.log(p[np.arange(n), labels] + eps).mean())
    dlogits = p.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, (dlogits / n).astype(logits.dtype)


def backward(net: Network, x, labels, return_logits: bool = False):
    """Forward + loss + full reverse pass; returns (mean loss, named grads)."""
    xp, single = net._promote(x)
    out = xp
    for layer in net.layers:
        out = layer.forward(out, train=True)
    labels_arr = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    loss, dlogits = softmax_xent(out, labels_arr)
    d = dlogits
    for layer in reversed(net.layers):
        d = layer.backward(d)
    grads = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConcatPaths):
            for tag, path in (("a", layer.path_a), ("b", layer.path_b)):
                for j, sub in enumerate(path):
                    for pname, g in sub.grads.items():
                        grads[f"{i}.{tag}.{j}.{pname}"] = g
        else:
            for pname, g in layer.grads.items():
                grads[f"{i}.{pname}"] = g
    if return_logits:
        return loss, grads, (out[0] if single else out)
    return loss, grads


def predict(net: Network, x) -> np.ndarray:
    """Class indices from logits (argmax over the class axis)."""
    logits = net.forward(x)
    if net.fully_convolutional and logits.ndim >= 3:
        return np.argmax(logits, axis=-3)
    return np.argmax(logits, axis=-1)


class SGD:
    """Plain SGD with momentum: v = momentum*v - lr*grad; param += v."""

    def __init__(self, net: Network, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise ValueError("lr must be >= 0")
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p) for name, p in net.named_params().items()}

    def step(self, grads: dict[str, np.ndarray], batch_avg: int = 1) -> None:
        params = self.net.named_params()
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
            v = self.velocity[name]
            v *= self.momentum
            v -= self.lr * (g / batch_avg)
            p += v.astype(p.dtype)


def sgd_step(net: Network, grads: dict[str, np.ndarray], lr: float, momentum: float,
             velocity: dict[str, np.ndarray] | None = None, batch_avg: int = 1) -> dict[str, np.ndarray]:
    """One functional update step; returns the velocity state for chaining."""
    if velocity is None:
        velocity = {name: np.zeros_like(p) for name, p in net.named_params().items()}
    for name, p in net.named_params().items():
        v = velocity[name]
        v *= momentum
        v -= lr * (grads[name] / batch_avg)
        p += v.astype(p.dtype)
    return velocity


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    excluded: list[tuple[str, int]] = field(default_factory=list)
    worst_param: str = ""


def _loss_and_gates(net: Network, x, labels) -> tuple[float, list[np.ndarray]]:
    gates: list[np.ndarray] = []
    logits = net.forward(x, capture=gates)
    loss, _ = softmax_xent(logits, labels)
    return loss, gates


def grad_check(net: Network, x, labels, eps: float = 1e-5,
               max_per_param: int | None = None, seed: int = 0) -> GradCheckResult:
    """Compare analytic gradients against central finite differences in float64.

    Parameters whose perturbation flips (or touches) a ReLU gate are reported
    as excluded rather than failed: the loss is not differentiable there and a
    finite difference says nothing about the analytic gradient.
    """
    net64 = net.clone(np.float64)
    if net64.takes_pair:
        x = tuple(np.asarray(v, dtype=np.float64) for v in x)
    else:
        x = np.asarray(x, dtype=np.float64)
    _, grads = backward(net64, x, labels)
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    worst = ""
    checked = 0
    excluded: list[tuple[str, int]] = []
    for name, arr in net64.named_params().items():
        if max_per_param is not None and arr.size > max_per_param:
            idxs = np.sort(rng.choice(arr.size, size=max_per_param, replace=False))
        else:
            idxs = np.arange(arr.size)
        g = grads[name].ravel()
        flat = arr.ravel()
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus, gates_p = _loss_and_gates(net64, x, labels)
            flat[i] = orig - eps
            f_minus, gates_m = _loss_and_gates(net64, x, labels)
            flat[i] = orig
            # non-smooth along this coordinate iff some ReLU input changes
            # sign or sits on the kink in exactly one of the two evaluations;
            # an input at exactly 0 in both is locally constant and fine
            kink = any(
                (((gp > 0) != (gm > 0)) | ((gp == 0) != (gm == 0))).any()
                for gp, gm in zip(gates_p, gates_m)
            )
            if kink:
                excluded.append((name, int(i)))
                continue
            num = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(g[i] - num) / max(abs(g[i]), abs(num), 1e-8)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{i}]"
    return GradCheckResult(max_rel_error=max_rel, checked=checked,
                           excluded=excluded, worst_param=worst)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, net: Network) -> None:
    """Versioned binary container: header, then one record per layer with a
    kind tag, shape ints, and little-endian float32 parameters."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        _c.write_u32(f, CHECKPOINT_VERSION)
        _c.write_str(f, net.arch)
        _c.write_u32(f, 1 if net.fully_convolutional else 0)
        _c.write_u8(f, len(net.input_shapes))
        for shape in net.input_shapes:
            _c.write_u8(f, len(shape))
            for dim in shape:
                _c.write_u32(f, dim)
        _c.write_u32(f, len(net.layers))
        for layer in net.layers:
            _write_layer(f, layer)


def _write_layer(f, layer) -> None:
    _c.write_str(f, layer.kind)
    if isinstance(layer, Conv2d):
        for v in (layer.out_channels, layer.in_channels, layer.kh, layer.kw):
            _c.write_u32(f, v)
        _c.write_array(f, layer.weight.astype(np.float32, copy=False))
        _c.write_array(f, layer.bias.astype(np.float32, copy=False))
    elif isinstance(layer, Dense):
        _c.write_u32(f, layer.out_features)
        _c.write_u32(f, layer.in_features)
        _c.write_array(f, layer.weight.astype(np.float32, copy=False))
        _c.write_array(f, layer.bias.astype(np.float32, copy=False))
    elif isinstance(layer, ConcatPaths):
        _c.write_u32(f, len(layer.path_a))
        _c.write_u32(f, len(layer.path_b))
        for sub in layer.path_a:
            _write_layer(f, sub)
        for sub in layer.path_b:
            _write_layer(f, sub)
    elif isinstance(layer, (ReLU, MaxPool2x2)):
        pass
    else:
        raise ValueError(f"cannot serialize layer kind {layer.kind!r}")


def load_checkpoint(path: str | Path) -> Network:
    with open(path, "rb") as f:
        _c.expect_magic(f, CHECKPOINT_MAGIC)
        version = _c.read_u32(f)
        if version != CHECKPOINT_VERSION:
            raise _c.ContainerError(f"unsupported checkpoint version {version}")
        arch = _c.read_str(f)
        fcn = bool(_c.read_u32(f))
        n_inputs = _c.read_u8(f)
        shapes = []
        for _ in range(n_inputs):
            ndim = _c.read_u8(f)
            shapes.append(tuple(_c.read_u32(f) for _ in range(ndim)))
        count = _c.read_u32(f)
        layers = [_read_layer(f) for _ in range(count)]
        return Network(layers, arch=arch, input_shapes=tuple(shapes), fully_convolutional=fcn)


def _read_layer(f):
    kind = _c.read_str(f)
    if kind == "conv":
        out_c, in_c, kh, kw = (_c.read_u32(f) for _ in range(4))
        layer = Conv2d(in_c, out_c, (kh, kw))
        layer.weight = _c.read_array(f)
        layer.bias = _c.read_array(f)
        return layer
    if kind == "fc":
        out_f, in_f = _c.read_u32(f), _c.read_u32(f)
        layer = Dense(in_f, out_f)
        layer.weight = _c.read_array(f)
        layer.bias = _c.read_array(f)
        return layer
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool2x2()
    if kind == "concat":
        na, nb = _c.read_u32(f), _c.read_u32(f)
        path_a = [_read_layer(f) for _ in range(na)]
        path_b = [_read_layer(f) for _ in range(nb)]
        return ConcatPaths(path_a, path_b)
    raise _c.ContainerError(f"unknown layer kind {kind!r}")
