"""Evaluation metrics for binary lesion masks.

Pixel metrics (Dice, AVD), a boundary-distance metric (95th percentile
Hausdorff, nearest-rank) and lesion-wise detection metrics built on
connected-component labeling.  Undefined cases raise
:class:`UndefinedMetricError` rather than returning a sentinel.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import check_binary_mask, check_same_shape
from .exceptions import ConfigError, UndefinedMetricError

__all__ = [
    "dsc",
    "hausdorff95",
    "hausdorff",
    "directed_distances",
    "nearest_rank",
    "avd",
    "LesionComponents",
    "connected_components",
    "detected_components",
    "lesion_recall",
    "lesion_f1",
    "evaluate_pair",
    "METRIC_NAMES",
]

METRIC_NAMES = ("dsc", "h95", "avd", "recall", "f1")


def _pair(G, P):
    G = check_binary_mask(G, "G")
    P = check_binary_mask(P, "P")
    check_same_shape(G, P, names=("G", "P"))
    return G, P


def dsc(G, P):
    """Dice similarity coefficient; 1.0 when both masks are empty."""
    G, P = _pair(G, P)
    total = int(G.sum()) + int(P.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((G & P).sum()) / total


def directed_distances(A, B, spacing=None):
    """Distance from every foreground pixel of ``A`` to the nearest of ``B``."""
    edt = ndimage.distance_transform_edt(~B, sampling=spacing)
    return edt[A]


def nearest_rank(values, q):
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        raise UndefinedMetricError("percentile of an empty set")
    rank = max(1, math.ceil(q / 100.0 * values.size))
    return float(values[rank - 1])


def hausdorff95(G, P, spacing=None, q=95.0):
    """Symmetric percentile Hausdorff distance (pixel units unless ``spacing``)."""
    G, P = _pair(G, P)
    if not G.any() or not P.any():
        raise UndefinedMetricError("H95 is undefined when either mask is empty")
    return max(
        nearest_rank(directed_distances(G, P, spacing), q),
        nearest_rank(directed_distances(P, G, spacing), q),
    )


def hausdorff(G, P, spacing=None):
    """Exact (100th percentile) symmetric Hausdorff distance."""
    return hausdorff95(G, P, spacing, q=100.0)


def avd(G, P):
    """Absolute volume difference in percent of the ground-truth volume."""
    G, P = _pair(G, P)
    vg = int(G.sum())
    if vg == 0:
        raise UndefinedMetricError("AVD is undefined for an empty ground truth")
    return 100.0 * abs(vg - int(P.sum())) / vg


@dataclass(frozen=True)
class LesionComponents:
    """Labeled regions; ``labels`` holds 0 for background and 1..count."""

    labels: np.ndarray
    count: int
    connectivity: int

    def regions(self):
        """``{id: array of (row, col) pixels}`` in raster order of first pixel."""
        return {i: np.argwhere(self.labels == i) for i in range(1, self.count + 1)}


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def connected_components(mask, connectivity=8):
    """Label connected foreground regions.

    Region ids follow the raster order (row-major) of each region's first
    pixel.
    """
    if connectivity not in _STRUCTURES:
        raise ConfigError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = check_binary_mask(mask)
    labels, count = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    if count:
        flat = labels.ravel()
        first = np.full(count + 1, flat.size)
        nz = np.flatnonzero(flat)
        np.minimum.at(first, flat[nz], nz)
        order = np.argsort(first[1:], kind="stable") + 1
        remap = np.zeros(count + 1, dtype=labels.dtype)
        remap[order] = np.arange(1, count + 1)
        labels = remap[labels]
    return LesionComponents(labels, int(count), connectivity)


def detected_components(components, other, min_iou=None):
    """Boolean per component: does it count as matched against mask ``other``?

    Default rule is any pixel overlap; with ``min_iou`` the component must
    reach that IoU against the overlapping part of ``other``'s foreground.
    """
    other = np.asarray(other, dtype=bool)
    hits = np.zeros(components.count, dtype=bool)
    for i in range(1, components.count + 1):
        region = components.labels == i
        inter = int((region & other).sum())
        if min_iou is None:
            hits[i - 1] = inter > 0
        else:
            union = int(region.sum()) + int(other[region].sum()) - inter
            hits[i - 1] = inter > 0 and inter / union >= min_iou
    return hits


def lesion_recall(G, P, connectivity=8, min_iou=None):
    """Fraction of ground-truth lesions that the prediction touches."""
    G, P = _pair(G, P)
    comps = connected_components(G, connectivity)
    if comps.count == 0:
        raise UndefinedMetricError("lesion recall is undefined without ground-truth lesions")
    return float(detected_components(comps, P, min_iou).sum()) / comps.count


def lesion_f1(G, P, connectivity=8, min_iou=None):
    """``N_c / (N_c + N_f)`` over predicted components.

    ``N_c`` counts detected ground-truth lesions (as in :func:`lesion_recall`)
    and ``N_f`` predicted components that share no pixel with ``G``.
    """
    G, P = _pair(G, P)
    n_c = int(detected_components(connected_components(G, connectivity), P, min_iou).sum())
    pred = connected_components(P, connectivity)
    n_f = int((~detected_components(pred, G)).sum())
    if pred.count == 0 or n_c + n_f == 0:
        raise UndefinedMetricError("lesion F1 is undefined without predicted lesions")
    return n_c / (n_c + n_f)


def evaluate_pair(G, P, spacing=None, connectivity=8):
    """All five metrics for one mask pair; undefined ones come back as None."""
    out = {}
    funcs = {
        "dsc": lambda: dsc(G, P),
        "h95": lambda: hausdorff95(G, P, spacing),
        "avd": lambda: avd(G, P),
        "recall": lambda: lesion_recall(G, P, connectivity),
        "f1": lambda: lesion_f1(G, P, connectivity),
    }
    for name, fn in funcs.items():
        try:
            out[name] = fn()
        except UndefinedMetricError:
            out[name] = None
    return out
