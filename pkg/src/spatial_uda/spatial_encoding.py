"""Semantic- and boundary-aware encoding of probability maps.

A probability map ``P`` (prediction or ground truth) is expanded into the
six-channel stack ::

    [P, J - P, sobel_x(P), sobel_y(P), J - sobel_x(P), J - sobel_y(P)]

where ``J`` is the all-ones map and the Sobel responses are taken in absolute
value and divided by 4 so that every channel stays in ``[0, 1]``.  The
discriminator sees the two image channels followed by this stack.

Two entry points exist for every operation: NumPy functions for single maps
(``sobel_x``, ``encode_spatial``, ...) and a batched, differentiable torch
path (:func:`encode_spatial_torch`) used inside training.  Both share the
same kernels and padding rules.
"""

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_images, check_prob_map, check_same_shape
from .exceptions import ConfigError, InvalidInputError

__all__ = [
    "SOBEL_X",
    "SOBEL_Y",
    "ENCODING_CHANNELS",
    "sobel_x",
    "sobel_y",
    "invert",
    "encode_spatial",
    "encode_spatial_torch",
    "build_discriminator_input",
    "build_discriminator_input_torch",
    "discriminator_channels",
    "SpatialEncoder",
]

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()

# Largest |response| of a Sobel kernel on a [0, 1] map.
_SOBEL_NORM = 4.0

# Number of encoding channels produced per mode.  "mask" and "edge" are the
# ablation variants; "full7" drops J - sobel_y(P) for the seven-channel
# discriminator input.
ENCODING_CHANNELS = {"mask": 1, "edge": 3, "full7": 5, "full": 6}


def _check_mode(mode):
    if mode not in ENCODING_CHANNELS:
        raise ConfigError(
            f"unknown encoding mode {mode!r}; expected one of {sorted(ENCODING_CHANNELS)}"
        )
    return mode


def discriminator_channels(mode="full", image_channels=2):
    """Input width of the discriminator for an encoding mode."""
    return image_channels + ENCODING_CHANNELS[_check_mode(mode)]


def _sobel_torch(P):
    # P: (N, 1, H, W).  Separable form: central difference along one axis,
    # then [1, 2, 1] smoothing along the other.  Differencing first keeps
    # constant regions exactly zero.  The sign convention is irrelevant
    # because of the absolute value.
    Pz = F.pad(P, (1, 1, 1, 1))
    dx = Pz[..., :, 2:] - Pz[..., :, :-2]
    gx = dx[..., :-2, :] + 2.0 * dx[..., 1:-1, :] + dx[..., 2:, :]
    dy = Pz[..., 2:, :] - Pz[..., :-2, :]
    gy = dy[..., :, :-2] + 2.0 * dy[..., :, 1:-1] + dy[..., :, 2:]
    return torch.cat([gx.abs(), gy.abs()], dim=1) / _SOBEL_NORM


def encode_spatial_torch(P, mode="full"):
    """Batched differentiable encoding.

    Parameters
    ----------
    P : torch.Tensor of shape (N, 1, H, W)
        Probability maps in ``[0, 1]``.
    mode : {"full", "full7", "edge", "mask"}
        Which channels to emit.

    Returns
    -------
    torch.Tensor of shape (N, ENCODING_CHANNELS[mode], H, W)
    """
    _check_mode(mode)
    if P.ndim != 4 or P.shape[1] != 1:
        raise InvalidInputError(f"expected (N, 1, H, W) probability maps, got {tuple(P.shape)}")
    if P.shape[-1] < 3 or P.shape[-2] < 3:
        raise InvalidInputError("probability maps must be at least 3x3")
    if mode == "mask":
        return P
    edges = _sobel_torch(P)
    fx, fy = edges[:, :1], edges[:, 1:]
    if mode == "edge":
        return torch.cat([P, fx, fy], dim=1)
    channels = [P, 1.0 - P, fx, fy, 1.0 - fx]
    if mode == "full":
        channels.append(1.0 - fy)
    return torch.cat(channels, dim=1)


def _sobel_numpy(P, kernel_index):
    P = check_prob_map(P)
    t = torch.from_numpy(P)[None, None]
    return _sobel_torch(t)[0, kernel_index].numpy()


def sobel_x(P):
    """Normalized horizontal-gradient edge map ``|P * Kx| / 4`` (zero padded)."""
    return _sobel_numpy(P, 0)


def sobel_y(P):
    """Normalized vertical-gradient edge map ``|P * Ky| / 4`` (zero padded)."""
    return _sobel_numpy(P, 1)


def invert(M):
    """Inverse map ``J - M``."""
    M = check_prob_map(M, name="M", min_size=1)
    return 1.0 - M


def encode_spatial(P, mode="full"):
    """Encode a single H x W probability map into a (C, H, W) stack."""
    P = check_prob_map(P)
    return encode_spatial_torch(torch.from_numpy(P)[None, None], mode)[0].numpy()


def build_discriminator_input_torch(images, P, mode="full"):
    """Concatenate (N, C, H, W) images with the encoding of (N, 1, H, W) maps."""
    if images.ndim != 4 or P.ndim != 4:
        raise InvalidInputError("images and P must be 4-D batches")
    if images.shape[0] != P.shape[0] or images.shape[-2:] != P.shape[-2:]:
        raise InvalidInputError(
            f"images {tuple(images.shape)} and maps {tuple(P.shape)} do not align"
        )
    return torch.cat([images, encode_spatial_torch(P, mode).to(images.dtype)], dim=1)


def build_discriminator_input(images, P, mode="full"):
    """Stack a (2, H, W) image pair with the encoding of ``P``.

    Channel order is ``[modality_a, modality_b, *encode_spatial(P, mode)]``;
    with the default mode that is 8 channels.
    """
    images = check_images(images)
    if images.ndim != 3:
        raise InvalidInputError(f"images must be (C, H, W), got {images.shape}")
    P = check_prob_map(P)
    check_same_shape(images[0], P, names=("images", "P"))
    enc = encode_spatial(P, mode)
    return np.concatenate([images, enc], axis=0)


class SpatialEncoder(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping (N, H, W) probability maps to encodings.

    Output has shape (N, C, H, W) with ``C = ENCODING_CHANNELS[mode]``.
    """

    def __init__(self, mode="full"):
        self.mode = mode

    def fit(self, X, y=None):
        _check_mode(self.mode)
        self.n_channels_out_ = ENCODING_CHANNELS[self.mode]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        for P in X:
            check_prob_map(P)
        return encode_spatial_torch(torch.from_numpy(X)[:, None], self.mode).numpy()
