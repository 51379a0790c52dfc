"""Label-free convergence monitoring for the adaptation phase.

The drift ``d_j`` is the Euclidean distance between the current binarized
target predictions and the frozen predictions ``A0`` taken right after
pre-training.  Adaptation is considered converged once the population
variance of the last ``k`` drifts is small while the latest drift is large.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_same_shape
from .exceptions import ConfigError, InvalidInputError

__all__ = [
    "mask_distance",
    "window_variance",
    "window_mean",
    "MonitorState",
    "should_stop",
    "read_drift_csv",
    "replay",
]


def mask_distance(Ai, A0):
    """``sqrt(sum((Ai - A0)**2))`` over every entry of the stacked masks."""
    Ai = np.asarray(Ai, dtype=np.float64)
    A0 = np.asarray(A0, dtype=np.float64)
    check_same_shape(Ai, A0, names=("Ai", "A0"))
    diff = Ai - A0
    return math.sqrt(float(np.sum(diff * diff)))


def window_mean(d_history, k):
    if len(d_history) < k:
        return None
    return float(np.mean(np.asarray(d_history[-k:], dtype=np.float64)))


def window_variance(d_history, k):
    """Population variance (divide by ``k``) of the last ``k`` drifts.

    Returns None while fewer than ``k`` values have been recorded.
    """
    if k < 1:
        raise ConfigError(f"window length must be positive, got {k}")
    if len(d_history) < k:
        return None
    window = np.asarray(d_history[-k:], dtype=np.float64)
    return float(np.mean((window - window.mean()) ** 2))


@dataclass
class MonitorState:
    """Frozen initial predictions plus the append-only drift history."""

    A0: np.ndarray
    k: int = 5
    eps1: float = 0.1
    eps2: float = 6.0
    min_epochs: int = 5
    d_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        A0 = np.array(self.A0, dtype=np.uint8)
        if not np.all((A0 == 0) | (A0 == 1)):
            raise InvalidInputError("A0 must be binary")
        A0.setflags(write=False)
        self.A0 = A0

    def record(self, Ai):
        """Append the drift of predictions ``Ai`` from ``A0`` and return it."""
        d = mask_distance(Ai, self.A0)
        self.d_history.append(d)
        return d

    @property
    def latest(self):
        return self.d_history[-1] if self.d_history else None

    def variance(self):
        return window_variance(self.d_history, self.k)

    def snapshot(self):
        """Read-only copy suitable for reporting from another thread."""
        return MonitorState(self.A0, self.k, self.eps1, self.eps2, self.min_epochs, list(self.d_history))


def should_stop(state, current_epoch):
    """True iff epoch >= min_epochs, window variance < eps1 and latest d > eps2."""
    if current_epoch < state.min_epochs:
        return False
    var = state.variance()
    if var is None:
        return False
    return var < state.eps1 and state.latest > state.eps2


def read_drift_csv(path, column="d_j"):
    """Drift values from a CSV with a header row (e.g. a training log)."""
    rows = []
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(lines):
            value = row.get(column, "")
            if value not in ("", None):
                rows.append((int(row["epoch"]) if row.get("epoch") else None, float(value)))
    return rows


def replay(d_values, k, eps1, eps2, min_epochs=0, per_epoch=None):
    """Run the stopping rule over a recorded drift series.

    With ``per_epoch=n`` the rule is evaluated after every ``n`` values (one
    epoch); otherwise after every value.  Returns ``(stop_index, sigma2)``
    where ``sigma2`` lists the windowed variance at each evaluation (None
    when not ready) and ``stop_index`` is the 1-based evaluation at which
    the rule fired, or None.
    """
    state = MonitorState(np.zeros(1, dtype=np.uint8), k, eps1, eps2, min_epochs)
    step = per_epoch or 1
    sigma2 = []
    stop = None
    for i in range(0, len(d_values) - step + 1, step):
        state.d_history.extend(d_values[i : i + step])
        sigma2.append(state.variance())
        epoch = len(sigma2)
        if stop is None and should_stop(state, epoch):
            stop = epoch
    return stop, sigma2
