"""Input validation helpers."""

import numpy as np
import torch

from .exceptions import ConfigError, InvalidInputError


def check_prob_map(P, name="P", min_size=3):
    """Return ``P`` as a float64 2-D array after checking range and size."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {P.shape}")
    if P.shape[0] < min_size or P.shape[1] < min_size:
        raise InvalidInputError(
            f"{name} must be at least {min_size}x{min_size}, got {P.shape}"
        )
    if not np.all(np.isfinite(P)):
        raise InvalidInputError(f"{name} contains non-finite values")
    if P.min() < 0.0 or P.max() > 1.0:
        raise InvalidInputError(f"{name} values must lie in [0, 1]")
    return P


def check_binary_mask(M, name="mask"):
    M = np.asarray(M)
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all((M == 0) | (M == 1)):
        raise InvalidInputError(f"{name} must be binary")
    return M.astype(bool)


def check_same_shape(a, b, names=("a", "b")):
    if tuple(a.shape) != tuple(b.shape):
        raise InvalidInputError(
            f"shape mismatch: {names[0]}{tuple(a.shape)} vs {names[1]}{tuple(b.shape)}"
        )


def check_images(images, name="images"):
    """Return a (C, H, W) or (N, C, H, W) float64 array of finite values."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim not in (3, 4):
        raise InvalidInputError(f"{name} must be (C,H,W) or (N,C,H,W), got {images.shape}")
    if not np.all(np.isfinite(images)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return images


def check_in_range(value, low, high, name, *, low_open=False, high_open=False):
    lo_ok = value > low if low_open else value >= low
    hi_ok = value < high if high_open else value <= high
    if not (lo_ok and hi_ok):
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise ConfigError(f"{name}={value!r} outside {lb}{low}, {high}{rb}")
    return value


def as_tensor(x, dtype=None):
    """Tensor view of ``x``; tensors pass through untouched unless a dtype is forced."""
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype or torch.float64)
