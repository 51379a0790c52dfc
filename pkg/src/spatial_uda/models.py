"""Generator (U-shaped segmenter) and patch discriminator.

Networks are ordinary ``torch.nn.Module`` objects; the functional helpers
(:func:`init_params`, :func:`generator_forward`, :func:`discriminator_forward`,
:func:`backward`) operate on plain ``{name: tensor}`` dictionaries so that
parameters can be checkpointed, compared and stepped without holding on to
module instances.
"""

from collections import OrderedDict
from dataclasses import dataclass

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.func import functional_call

from .exceptions import ConfigError, InvalidInputError, UsageError

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "UNetGenerator",
    "PatchDiscriminator",
    "build_model",
    "init_params",
    "init_std",
    "generator_forward",
    "discriminator_forward",
    "backward",
    "patch_grid_size",
]


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 2
    out_channels: int = 1
    levels: int = 3
    base_filters: int = 16
    convs_per_level: int = 2
    negative_slope: float = 0.2

    def validate(self):
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if self.base_filters < 4:
            raise ConfigError(f"base_filters must be >= 4, got {self.base_filters}")
        if self.convs_per_level < 1:
            raise ConfigError("convs_per_level must be >= 1")
        if self.in_channels < 1 or self.out_channels != 1:
            raise ConfigError("generator needs in_channels >= 1 and out_channels == 1")
        if self.negative_slope < 0:
            raise ConfigError("negative_slope must be non-negative")
        return self

    def check_input_size(self, height, width):
        step = 2 ** self.levels
        if height % step or width % step:
            raise InvalidInputError(
                f"input {height}x{width} not divisible by 2**levels = {step}"
            )


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 8
    conv_blocks: int = 4
    base_filters: int = 16
    max_filters: int = 128
    negative_slope: float = 0.2

    def validate(self):
        if self.in_channels < 2:
            raise ConfigError("discriminator needs at least 2 input channels")
        if self.conv_blocks < 1 or self.base_filters < 1:
            raise ConfigError("conv_blocks and base_filters must be positive")
        if self.negative_slope < 0:
            raise ConfigError("negative_slope must be non-negative")
        return self

    def check_input_size(self, height, width):
        gh, gw = patch_grid_size(height, self.conv_blocks), patch_grid_size(width, self.conv_blocks)
        if gh < 2 or gw < 2:
            raise InvalidInputError(
                f"input {height}x{width} yields a {gh}x{gw} patch grid; need at least 2x2"
            )


def patch_grid_size(n, conv_blocks=4):
    """Side length of the discriminator's score grid for an input side ``n``.

    Each block is a 4x4 stride-2 convolution with padding 1 (``n -> n // 2``)
    and the head is an unpadded 3x3 convolution (``n -> n - 2``), hence
    ``n // 2**conv_blocks - 2``: 200 -> 10, 64 -> 2.
    """
    for _ in range(conv_blocks):
        n = (n + 2 - 4) // 2 + 1
    return n - 2


def _conv_block(cin, cout, n_convs, slope):
    layers = []
    for i in range(n_convs):
        layers += [nn.Conv2d(cin if i == 0 else cout, cout, 3, padding=1), nn.LeakyReLU(slope)]
    return nn.Sequential(*layers)


class UNetGenerator(nn.Module):
    """U-net: conv blocks + max pooling down, nearest upsampling + conv up.

    Skip connections concatenate encoder features into the decoder at each
    matching level.  Output is a sigmoid probability map of the input size.
    """

    def __init__(self, config=None):
        super().__init__()
        self.config = cfg = (config or GeneratorConfig()).validate()
        widths = [cfg.base_filters * 2**i for i in range(cfg.levels)]
        self.down = nn.ModuleList()
        cin = cfg.in_channels
        for w in widths:
            self.down.append(_conv_block(cin, w, cfg.convs_per_level, cfg.negative_slope))
            cin = w
        self.bottom = _conv_block(cin, cfg.base_filters * 2**cfg.levels, 1, cfg.negative_slope)
        cin = cfg.base_filters * 2**cfg.levels
        self.up = nn.ModuleList()
        self.merge = nn.ModuleList()
        for w in reversed(widths):
            self.up.append(_conv_block(cin, w, 1, cfg.negative_slope))
            self.merge.append(_conv_block(2 * w, w, cfg.convs_per_level - 1 or 1, cfg.negative_slope))
            cin = w
        self.head = nn.Conv2d(cin, cfg.out_channels, 1)

    def forward(self, x):
        self.config.check_input_size(*x.shape[-2:])
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottom(x)
        for up, merge, skip in zip(self.up, self.merge, reversed(skips)):
            x = up(F.interpolate(x, scale_factor=2, mode="nearest"))
            x = merge(torch.cat([skip, x], dim=1))
        return torch.sigmoid(self.head(x))


class PatchDiscriminator(nn.Module):
    """PatchGAN-style discriminator emitting a grid of sigmoid scores."""

    def __init__(self, config=None):
        super().__init__()
        self.config = cfg = (config or DiscriminatorConfig()).validate()
        layers = []
        cin = cfg.in_channels
        for i in range(cfg.conv_blocks):
            cout = min(cfg.base_filters * 2**i, cfg.max_filters)
            layers += [nn.Conv2d(cin, cout, 4, stride=2, padding=1), nn.LeakyReLU(cfg.negative_slope)]
            cin = cout
        layers.append(nn.Conv2d(cin, 1, 3))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise InvalidInputError(
                f"discriminator expects (N, {self.config.in_channels}, H, W), got {tuple(x.shape)}"
            )
        self.config.check_input_size(*x.shape[-2:])
        return torch.sigmoid(self.body(x))


def build_model(config, dtype=torch.float64):
    """Module for a generator or discriminator config (uninitialized)."""
    if isinstance(config, GeneratorConfig):
        model = UNetGenerator(config)
    elif isinstance(config, DiscriminatorConfig):
        model = PatchDiscriminator(config)
    else:
        raise ConfigError(f"unsupported config type {type(config).__name__}")
    return model.to(dtype)


def init_std(fan_in, negative_slope):
    """Standard deviation of the He-normal weight distribution."""
    return math.sqrt(2.0 / (1.0 + negative_slope**2)) / math.sqrt(fan_in)


def init_params(config, seed, dtype=torch.float64):
    """Deterministic parameters for ``config``.

    Weights ~ N(0, init_std(fan_in, slope)**2) where ``fan_in`` is
    ``in_channels * kh * kw``; biases are zero.  Tensors are drawn in module
    registration order from a single generator seeded with ``seed``.
    """
    config.validate()
    model = build_model(config, dtype)
    gen = torch.Generator().manual_seed(int(seed))
    params = OrderedDict()
    for name, p in model.named_parameters():
        if name.endswith("bias"):
            params[name] = torch.zeros(p.shape, dtype=dtype)
        else:
            fan_in = p.shape[1] * p.shape[2] * p.shape[3]
            std = init_std(fan_in, config.negative_slope)
            params[name] = torch.randn(p.shape, generator=gen, dtype=dtype) * std
    return params


_MODULE_CACHE = {}


def _module_for(config, dtype):
    key = (config, dtype)
    if key not in _MODULE_CACHE:
        _MODULE_CACHE[key] = build_model(config, dtype)
    return _MODULE_CACHE[key]


def generator_forward(params, images, config=None):
    """Probability maps (N, 1, H, W) for images (N, C, H, W) or (C, H, W)."""
    config = config or GeneratorConfig()
    x = images if isinstance(images, torch.Tensor) else torch.as_tensor(images)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    dtype = next(iter(params.values())).dtype
    out = functional_call(_module_for(config, dtype), params, (x.to(dtype),))
    return out[0] if squeeze else out


def discriminator_forward(params, inputs, config=None):
    """Patch score grid (N, 1, h, w) for discriminator inputs (N, C, H, W)."""
    config = config or DiscriminatorConfig()
    x = inputs if isinstance(inputs, torch.Tensor) else torch.as_tensor(inputs)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    dtype = next(iter(params.values())).dtype
    out = functional_call(_module_for(config, dtype), params, (x.to(dtype),))
    return out[0] if squeeze else out


def backward(loss, params):
    """Gradients of a scalar ``loss`` with respect to every tensor in ``params``.

    Returns an ordered ``{name: grad}`` dict with zeros for parameters the
    loss does not depend on.
    """
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        raise UsageError("loss has no recorded forward graph; call a forward pass with grad-enabled params")
    names = [n for n, p in params.items() if p.requires_grad]
    if not names:
        raise UsageError("no parameter requires grad")
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    out = OrderedDict()
    for name, p in params.items():
        g = grads[names.index(name)] if name in names else None
        out[name] = torch.zeros_like(p) if g is None else g
    return out
