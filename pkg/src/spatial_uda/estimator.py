"""Scikit-learn style wrapper around pre-training plus adversarial adaptation."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images
from .data_synth import ZScoreNormalizer
from .exceptions import InvalidInputError
from .metrics import dsc
from .training import TrainConfig, TrainingData, TrainingLog, predict_proba, pretrain, run_uda

__all__ = ["SpatialUDASegmenter"]


class SpatialUDASegmenter(BaseEstimator):
    """Lesion segmenter adapted to an unlabeled target domain.

    ``fit`` trains the generator on labeled source images, then runs the
    adversarial adaptation loop on unlabeled target images until the
    monitored stopping rule fires (or ``max_adapt_epochs`` is reached).
    Set ``adapt=False`` for the source-only baseline.

    Images are ``(N, 2, H, W)`` arrays with ``H`` and ``W`` divisible by
    ``2**(gen_levels - 1)``; each image is z-scored per channel before use.
    Masks are ``(N, H, W)`` binary arrays.

    Fitted attributes: ``generator_params_``, ``config_``, ``training_log_``,
    ``converged_``, ``stop_epoch_`` and ``pretrain_state_``.
    """

    def __init__(
        self,
        *,
        adapt=True,
        lr_seg=2e-4,
        lr_disc=1e-3,
        lr_adv=2e-4,
        batch_size=8,
        pretrain_epochs=20,
        max_adapt_epochs=400,
        inner_iters=10,
        window=5,
        eps1=0.1,
        eps2=6.0,
        min_adapt_epochs=5,
        lam=0.5,
        flip_prob=0.05,
        encoding="full",
        augment=True,
        dtype="float64",
        gen_levels=3,
        gen_base_filters=16,
        random_state=0,
    ):
        self.adapt = adapt
        self.lr_seg = lr_seg
        self.lr_disc = lr_disc
        self.lr_adv = lr_adv
        self.batch_size = batch_size
        self.pretrain_epochs = pretrain_epochs
        self.max_adapt_epochs = max_adapt_epochs
        self.inner_iters = inner_iters
        self.window = window
        self.eps1 = eps1
        self.eps2 = eps2
        self.min_adapt_epochs = min_adapt_epochs
        self.lam = lam
        self.flip_prob = flip_prob
        self.encoding = encoding
        self.augment = augment
        self.dtype = dtype
        self.gen_levels = gen_levels
        self.gen_base_filters = gen_base_filters
        self.random_state = random_state

    def _make_config(self):
        params = self.get_params()
        params.pop("adapt")
        seed = params.pop("random_state")
        return TrainConfig(seed=int(seed), **params).validate()

    @staticmethod
    def _normalize(X):
        X = check_images(X)
        return ZScoreNormalizer().fit_transform(X)

    def fit(self, X_source, y_source, X_target=None, X_val=None, y_val=None):
        config = self._make_config()
        Xs = self._normalize(X_source)
        Ys = np.asarray(y_source, dtype=np.float64)
        if Ys.shape != (Xs.shape[0],) + Xs.shape[2:]:
            raise InvalidInputError(f"y_source shape {Ys.shape} does not match images {Xs.shape}")
        if not np.all((Ys == 0) | (Ys == 1)):
            raise InvalidInputError("y_source must be binary")
        if X_target is None:
            if self.adapt:
                raise InvalidInputError("X_target is required when adapt=True")
            Xt = Xs[:1]
        else:
            Xt = self._normalize(X_target)
        data = TrainingData(Xs, Ys, Xt)
        if X_val is not None:
            data.Xv, data.Yv = self._normalize(X_val), np.asarray(y_val, dtype=np.float64)

        log = TrainingLog()
        state = pretrain(data, config, log)
        self.pretrain_state_ = state
        self.converged_, self.stop_epoch_ = False, 0
        if self.adapt:
            import copy

            result = run_uda(copy.deepcopy(state), data, log)
            state = result.state
            self.converged_, self.stop_epoch_ = result.converged, result.stop_epoch
        self.config_ = config
        self.generator_params_ = state.gen
        self.training_log_ = log
        return self

    def predict_proba(self, X):
        """Foreground probability per pixel, shape ``(N, H, W)``."""
        check_is_fitted(self, "generator_params_")
        return predict_proba(self.generator_params_, self._normalize(X), self.config_.gen_config())

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def score(self, X, y):
        """Mean per-image Dice coefficient."""
        P = self.predict(X)
        Y = np.asarray(y).astype(np.uint8)
        return float(np.mean([dsc(g, p) for g, p in zip(Y, P)]))
