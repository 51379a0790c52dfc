"""Segmentation and adversarial objectives.

All losses are torch functions so they can sit inside an autograd graph;
NumPy inputs are accepted and promoted to float64 tensors.
"""

from dataclasses import dataclass

import numpy as np
import torch

from ._validation import as_tensor, check_in_range, check_same_shape
from .exceptions import ConfigError

__all__ = [
    "LossWeights",
    "REAL",
    "FAKE",
    "seg_loss",
    "adversarial_bce",
    "disc_loss",
    "gen_adv_loss",
    "flip_labels",
]

REAL = 1
FAKE = 0


@dataclass(frozen=True)
class LossWeights:
    """Weights for :func:`seg_loss`.

    ``lam`` mixes the Dice term (weight ``lam``) and cross-entropy term
    (weight ``1 - lam``).  ``ce_reduction`` is ``"mean"`` (default) or
    ``"sum"`` over voxels.
    """

    lam: float = 0.5
    smooth: float = 1.0
    clamp_eps: float = 1e-7
    ce_reduction: str = "mean"

    def __post_init__(self):
        check_in_range(self.lam, 0.0, 1.0, "lambda")
        check_in_range(self.smooth, 0.0, np.inf, "smooth", low_open=True)
        check_in_range(self.clamp_eps, 0.0, 0.5, "clamp_eps", low_open=True, high_open=True)
        if self.ce_reduction not in ("mean", "sum"):
            raise ConfigError(f"ce_reduction must be 'mean' or 'sum', got {self.ce_reduction!r}")


def seg_loss(p, y, weights=None):
    """Combined Dice + cross-entropy segmentation loss.

    ``-lam * (2*sum(y*p) + s) / (sum(y^2) + sum(p^2) + s)
    - (1 - lam) * CE`` where CE is ``sum(y*log p + (1-y)*log(1-p))``
    reduced by mean or sum.  ``p`` is clamped to ``[eps, 1 - eps]`` first.

    Sums run over every element of the inputs, so a batch is treated as one
    pooled volume.
    """
    w = weights or LossWeights()
    p = as_tensor(p)
    y = as_tensor(y, dtype=p.dtype)
    check_same_shape(p, y, names=("p", "y"))
    p = p.clamp(w.clamp_eps, 1.0 - w.clamp_eps)
    dice = (2.0 * (y * p).sum() + w.smooth) / ((y * y).sum() + (p * p).sum() + w.smooth)
    ll = y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)
    ll = ll.mean() if w.ce_reduction == "mean" else ll.sum()
    return -w.lam * dice - (1.0 - w.lam) * ll


def adversarial_bce(scores, targets, clamp_eps=1e-7):
    """Mean binary cross-entropy between patch scores and per-sample targets.

    ``scores`` is (N, 1, h, w) (or any shape with a leading batch axis) and
    ``targets`` holds one 0/1 label per sample, broadcast over its patches.
    """
    scores = as_tensor(scores)
    s = scores.clamp(clamp_eps, 1.0 - clamp_eps)
    t = as_tensor(targets, dtype=s.dtype).reshape((-1,) + (1,) * (s.ndim - 1))
    return -(t * torch.log(s) + (1.0 - t) * torch.log(1.0 - s)).mean()


def disc_loss(real_scores, fake_scores, clamp_eps=1e-7):
    """Discriminator objective ``mean(-log D(real)) + mean(-log(1 - D(fake)))``."""
    real = as_tensor(real_scores).clamp(clamp_eps, 1.0 - clamp_eps)
    fake = as_tensor(fake_scores, dtype=real.dtype).clamp(clamp_eps, 1.0 - clamp_eps)
    return -torch.log(real).mean() - torch.log(1.0 - fake).mean()


def gen_adv_loss(fake_scores, clamp_eps=1e-7):
    """Non-saturating generator objective ``mean(-log D(fake))``."""
    fake = as_tensor(fake_scores).clamp(clamp_eps, 1.0 - clamp_eps)
    return -torch.log(fake).mean()


def flip_labels(labels, flip_prob, rng):
    """Invert each real/fake label independently with probability ``flip_prob``.

    Parameters
    ----------
    labels : sequence of {0, 1}
        ``REAL`` (1) or ``FAKE`` (0) per sample.
    flip_prob : float in [0, 0.5]
    rng : numpy.random.Generator
        Consumed exactly once per call (one uniform draw per label).
    """
    check_in_range(flip_prob, 0.0, 0.5, "flip_prob")
    labels = np.asarray(labels, dtype=np.int64)
    flips = rng.random(labels.shape) < flip_prob
    return np.where(flips, 1 - labels, labels)
