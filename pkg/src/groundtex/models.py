"""The two network architectures and their fully convolutional conversion.

Ground net (single-channel texture patches, default 32x32):
    conv 5x5x20 - relu - maxpool 2x2 - conv 3x3x20 - relu - maxpool 2x2
    - fc 500 - relu - fc 2
Spatial trace at 32: 32 -> 28 -> 14 -> 12 -> 6, so the first fc sees 20*6*6 = 720.

Fusion net (RGB + texture patches, default 30x30): two parallel paths, each
    conv 3x3x32 - relu - conv 1x1x16 - relu - maxpool 2x2, twice over
(independent weights per repetition and per path), outputs concatenated along
channels (late fusion), then fc 1000 - relu - fc 2. Each path traces
30 -> 28 -> 28 -> 14 -> 12 -> 12 -> 6, so fusion yields 32*6*6 = 1152.

Two 2x2 pools give both nets a total output stride of 4, which is what lets
the converted nets emit one score per 4x4 image region.
"""

from __future__ import annotations

import numpy as np

from .nn import ConcatPaths, Conv2d, Dense, MaxPool2x2, Network, ReLU

GROUND_PATCH = 32
FUSION_PATCH = 30
OUTPUT_STRIDE = 4

GROUND_ARCH = "ground_v1"
FUSION_ARCH = "fusion_v1"

# texture values are px/row gradients around [-1, 1]; RGB is scaled to [0, 1]
TEXTURE_CLAMP = 1.0


def normalize_texture(values: np.ndarray) -> np.ndarray:
    """Texture network input: clamp(T, -1, 1), invalid pixels as 0."""
    out = np.nan_to_num(np.asarray(values, dtype=np.float32), nan=0.0)
    return np.clip(out / TEXTURE_CLAMP, -1.0, 1.0)


def normalize_rgb(img: np.ndarray) -> np.ndarray:
    """RGB network input in [0, 1], channel-first (3, H, W)."""
    img = np.asarray(img, dtype=np.float32) / 255.0
    return np.transpose(img, (2, 0, 1))


def build_ground_net(seed: int = 0, patch: int = GROUND_PATCH) -> Network:
    rng = np.random.default_rng(seed)
    side = (patch - 4) // 2  # after conv5 + pool
    side = (side - 2) // 2   # after conv3 + pool
    layers = [
        Conv2d(1, 20, 5, rng=rng),
        ReLU(),
        MaxPool2x2(),
        Conv2d(20, 20, 3, rng=rng),
        ReLU(),
        MaxPool2x2(),
        Dense(20 * side * side, 500, rng=rng),
        ReLU(),
        Dense(500, 2, rng=rng),
    ]
    return Network(layers, arch=GROUND_ARCH, input_shapes=((1, patch, patch),))


def _fusion_path(in_channels: int, rng: np.random.Generator) -> list:
    layers = []
    ch = in_channels
    for _ in range(2):
        layers += [Conv2d(ch, 32, 3, rng=rng), ReLU(),
                   Conv2d(32, 16, 1, rng=rng), ReLU(),
                   MaxPool2x2()]
        ch = 16
    return layers


def build_fusion_net(seed: int = 0, patch: int = FUSION_PATCH) -> Network:
    rng = np.random.default_rng(seed)
    side = (patch - 2) // 2
    side = (side - 2) // 2
    layers = [
        ConcatPaths(_fusion_path(3, rng), _fusion_path(1, rng)),
        Dense(32 * side * side, 1000, rng=rng),
        ReLU(),
        Dense(1000, 2, rng=rng),
    ]
    return Network(layers, arch=FUSION_ARCH,
                   input_shapes=((3, patch, patch), (1, patch, patch)))


def fcn_convert(net: Network) -> Network:
    """Re-express the fully connected layers as convolutions.

    The first fc over a (C, h, w) feature map becomes an h x w convolution and
    any later fc a 1x1 convolution; weights are reshaped, never changed, so on
    the training patch size the converted net reproduces the original scores.
    The result maps a whole image to a score grid with stride 4.
    """
    if net.fully_convolutional or not any(isinstance(l, Dense) for l in net.layers):
        raise ValueError("network is already fully convolutional")
    out_layers = []
    shape = net.input_shapes if net.takes_pair else net.input_shapes[0]
    for layer in net.layers:
        if isinstance(layer, Dense):
            if isinstance(shape[0], tuple) or len(shape) != 3:
                raise ValueError(f"dense layer reached with non-spatial input {shape}")
            c, h, w = shape
            conv = Conv2d(c, layer.out_features, (h, w))
            conv.weight = layer.weight.reshape(layer.out_features, c, h, w).copy()
            conv.bias = layer.bias.copy()
            out_layers.append(conv)
            shape = (layer.out_features, 1, 1)
        else:
            shape = layer.output_shape(shape)
            out_layers.append(_clone_structural(layer))
    return Network(out_layers, arch=f"fcn_{net.arch}",
                   input_shapes=net.input_shapes, fully_convolutional=True)


def _clone_structural(layer):
    if isinstance(layer, Conv2d):
        clone = Conv2d(layer.in_channels, layer.out_channels, (layer.kh, layer.kw))
        clone.weight = layer.weight.copy()
        clone.bias = layer.bias.copy()
        return clone
    if isinstance(layer, ReLU):
        return ReLU()
    if isinstance(layer, MaxPool2x2):
        return MaxPool2x2()
    if isinstance(layer, ConcatPaths):
        return ConcatPaths([_clone_structural(l) for l in layer.path_a],
                           [_clone_structural(l) for l in layer.path_b])
    raise ValueError(f"cannot convert layer kind {layer.kind!r}")


def build_small_ground_like(seed: int = 0) -> Network:
    """Reduced-width ground net for exhaustive finite-difference checks: the
    same layer-kind sequence on a 16x16 patch (16 -> 12 -> 6 -> 4 -> 2)."""
    rng = np.random.default_rng(seed)
    layers = [
        Conv2d(1, 4, 5, rng=rng), ReLU(), MaxPool2x2(),
        Conv2d(4, 6, 3, rng=rng), ReLU(), MaxPool2x2(),
        Dense(6 * 2 * 2, 8, rng=rng), ReLU(),
        Dense(8, 2, rng=rng),
    ]
    return Network(layers, arch="ground_small", input_shapes=((1, 16, 16),))


def build_small_fusion_like(seed: int = 0) -> Network:
    """Reduced-width fusion net on 14x14 patches (14 -> 12 -> 12 -> 6 -> 4 -> 4 -> 2)."""
    rng = np.random.default_rng(seed)

    def path(c_in):
        return [Conv2d(c_in, 4, 3, rng=rng), ReLU(), Conv2d(4, 3, 1, rng=rng), ReLU(), MaxPool2x2(),
                Conv2d(3, 4, 3, rng=rng), ReLU(), Conv2d(4, 3, 1, rng=rng), ReLU(), MaxPool2x2()]

    layers = [
        ConcatPaths(path(3), path(1)),
        Dense(6 * 2 * 2, 8, rng=rng), ReLU(),
        Dense(8, 2, rng=rng),
    ]
    return Network(layers, arch="fusion_small",
                   input_shapes=((3, 14, 14), (1, 14, 14)))


def ground_net_param_formula(patch: int = GROUND_PATCH) -> int:
    """Independent parameter-count arithmetic straight from the layer shapes."""
    side = ((patch - 4) // 2 - 2) // 2
    fc_in = 20 * side * side
    return (5 * 5 * 1 * 20 + 20) + (3 * 3 * 20 * 20 + 20) + (fc_in * 500 + 500) + (500 * 2 + 2)
