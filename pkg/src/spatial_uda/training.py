"""Two-stage training: supervised pre-training, then adversarial adaptation.

The adaptation loop repeats epochs of ``inner_iters`` iterations.  Every
iteration performs three updates:

1. source batch: generator step on the segmentation loss; discriminator
   step on the (label-flipped) "real" term using ground-truth encodings;
2. target batch: discriminator step on the (label-flipped) "fake" term
   using predicted encodings, then a generator step on the adversarial loss;
3. a fresh target batch: generator step on the adversarial loss only.

The generator carries two independent Adam moment sets, one for the
segmentation path and one for the adversarial path.  After each iteration the
drift of the binarized monitoring predictions from ``A0`` is recorded; after
each epoch the stopping rule is evaluated.

The stopping rule fires when the drift variance is *small* and the latest
drift is *large*; the loop-condition form ("continue while variance small and
drift large") is not used because it is satisfied trivially at the start.
"""

import copy
import csv
import io
import logging
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .data_synth import augment, zscore_normalize
from .exceptions import ConfigError, TrainingDivergenceError, UsageError
from .losses import FAKE, REAL, LossWeights, adversarial_bce, flip_labels, gen_adv_loss, seg_loss
from .metrics import dsc
from .models import (
    DiscriminatorConfig,
    GeneratorConfig,
    backward,
    discriminator_forward,
    generator_forward,
    init_params,
)
from .monitoring import MonitorState, should_stop, window_mean
from .spatial_encoding import build_discriminator_input_torch, discriminator_channels

__all__ = [
    "TrainConfig",
    "AdamHyper",
    "AdamMoments",
    "adam_step",
    "TrainingData",
    "TrainerState",
    "TrainingLog",
    "LOG_COLUMNS",
    "STOP_RULE_NOTE",
    "pretrain",
    "adapt_inner_iteration",
    "run_uda",
    "predict_proba",
    "mean_dice",
    "save_state",
    "load_state",
    "with_encoding",
]

log = logging.getLogger(__name__)

_DTYPES = {"float64": torch.float64, "float32": torch.float32}


@dataclass(frozen=True)
class TrainConfig:
    lr_seg: float = 0.0002
    lr_disc: float = 0.001
    lr_adv: float = 0.0002
    batch_size: int = 8
    pretrain_epochs: int = 20
    max_adapt_epochs: int = 400
    inner_iters: int = 10
    window: int = 5
    eps1: float = 0.1
    eps2: float = 6.0
    min_adapt_epochs: int = 5
    lam: float = 0.5
    smooth: float = 1.0
    ce_reduction: str = "mean"
    flip_prob: float = 0.05
    seed: int = 0
    encoding: str = "full"
    monitor_size: int = 16
    monitor_binarize: bool = True
    augment: bool = True
    dtype: str = "float64"
    gen_levels: int = 3
    gen_base_filters: int = 16
    gen_convs_per_level: int = 2
    disc_conv_blocks: int = 4
    disc_base_filters: int = 16

    def validate(self):
        for name in ("lr_seg", "lr_disc", "lr_adv"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.window > self.inner_iters:
            raise ConfigError(f"window ({self.window}) must not exceed inner_iters ({self.inner_iters})")
        if self.min_adapt_epochs < 1:
            # window <= inner_iters already guarantees a full window after one epoch
            raise ConfigError("min_adapt_epochs must be >= 1")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}")
        if self.monitor_size < 1:
            raise ConfigError("monitor_size must be >= 1")
        self.loss_weights()
        self.disc_config()
        flip_labels([], self.flip_prob, np.random.default_rng(0))
        return self

    def loss_weights(self):
        return LossWeights(lam=self.lam, smooth=self.smooth, ce_reduction=self.ce_reduction)

    def gen_config(self):
        return GeneratorConfig(
            levels=self.gen_levels,
            base_filters=self.gen_base_filters,
            convs_per_level=self.gen_convs_per_level,
        ).validate()

    def disc_config(self):
        return DiscriminatorConfig(
            in_channels=discriminator_channels(self.encoding),
            conv_blocks=self.disc_conv_blocks,
            base_filters=self.disc_base_filters,
        ).validate()

    @property
    def torch_dtype(self):
        return _DTYPES[self.dtype]

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamMoments:
    m: OrderedDict
    v: OrderedDict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            OrderedDict((k, torch.zeros_like(p, requires_grad=False)) for k, p in params.items()),
            OrderedDict((k, torch.zeros_like(p, requires_grad=False)) for k, p in params.items()),
        )


def adam_step(params, grads, moments, lr, hyper=AdamHyper()):
    """One bias-corrected Adam update; returns fresh ``(params, moments)``.

    Inputs are not modified.  Non-finite gradients raise
    :class:`TrainingDivergenceError`.
    """
    t = moments.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    new_p, new_m, new_v = OrderedDict(), OrderedDict(), OrderedDict()
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ConfigError(f"gradient shape {tuple(g.shape)} != param shape {tuple(p.shape)} for {name}")
            if not torch.isfinite(g).all():
                raise TrainingDivergenceError(f"non-finite gradient for {name}")
            m = b1 * moments.m[name] + (1 - b1) * g
            v = b2 * moments.v[name] + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            new_p[name] = (p - lr * m_hat / (v_hat.sqrt() + hyper.eps)).requires_grad_(p.requires_grad)
            new_m[name], new_v[name] = m, v
    return new_p, AdamMoments(new_m, new_v, t)


# ---------------------------------------------------------------------------
# data / state


@dataclass
class TrainingData:
    """Normalized arrays for one experiment.

    ``Xs``/``Ys`` are labeled source images (N, 2, H, W) / masks (N, H, W);
    ``Xt`` the unlabeled target adaptation images.  ``Xv``/``Yv`` (source
    validation) and ``Xe``/``Ye`` (target test, report-only) may be None.
    """

    Xs: np.ndarray
    Ys: np.ndarray
    Xt: np.ndarray
    Xv: np.ndarray | None = None
    Yv: np.ndarray | None = None
    Xe: np.ndarray | None = None
    Ye: np.ndarray | None = None

    @classmethod
    def from_samples(cls, source, target, source_val=None, target_test=None):
        def stack(samples, labels=False):
            if not samples:
                return None, None
            normed = [zscore_normalize(s) for s in samples]
            X = np.stack([s.image for s in normed])
            Y = np.stack([s.mask for s in normed]).astype(np.float64) if labels else None
            return X, Y

        Xs, Ys = stack(source, labels=True)
        Xt, _ = stack(target)
        Xv, Yv = stack(source_val or [], labels=True)
        Xe, Ye = stack(target_test or [], labels=True)
        return cls(Xs, Ys, Xt, Xv, Yv, Xe, Ye)


@dataclass
class TrainerState:
    config: TrainConfig
    gen: OrderedDict
    disc: OrderedDict
    gen_seg_moments: AdamMoments
    gen_adv_moments: AdamMoments
    disc_moments: AdamMoments
    rng: np.random.Generator
    monitor: MonitorState | None = None
    monitor_idx: np.ndarray | None = None
    epoch: int = 0
    pretrain_src_dice: float | None = None

    @classmethod
    def initial(cls, config):
        config.validate()
        dtype = config.torch_dtype
        gen = init_params(config.gen_config(), config.seed, dtype)
        disc = init_params(config.disc_config(), config.seed + 1, dtype)
        for p in list(gen.values()) + list(disc.values()):
            p.requires_grad_(True)
        return cls(
            config,
            gen,
            disc,
            AdamMoments.zeros_like(gen),
            AdamMoments.zeros_like(gen),
            AdamMoments.zeros_like(disc),
            np.random.default_rng(config.seed),
        )

    def check_finite(self):
        for group, params in (("generator", self.gen), ("discriminator", self.disc)):
            for name, p in params.items():
                if not torch.isfinite(p).all():
                    raise TrainingDivergenceError(f"{group} parameter {name} is non-finite")


LOG_COLUMNS = (
    "phase",
    "epoch",
    "inner_iter",
    "d_j",
    "sigma2",
    "mu",
    "seg_loss",
    "disc_loss",
    "gen_adv_loss",
    "src_dice",
    "tgt_dice",
)


STOP_RULE_NOTE = (
    "stop rule: stop when epoch >= min_adapt_epochs and sigma2 < eps1 and latest d_j > eps2; "
    "the same condition written as a loop guard would hold trivially at the start, so it is "
    "treated as the stop signal"
)


class TrainingLog:
    """Append-only table of training rows, serialized as CSV.

    The first line is a ``# created ...`` timestamp comment; further ``#``
    lines are deterministic notes.  ``tgt_dice`` is report-only: it is
    computed from held-out target labels and never feeds back into training.
    """

    def __init__(self, notes=(STOP_RULE_NOTE,), path=None):
        self.rows = []
        self.notes = list(notes)
        self.path = Path(path) if path else None
        if self.path:
            self.path.write_text(self._header())

    def _header(self):
        lines = [f"# created {time.strftime('%Y-%m-%dT%H:%M:%S')}"]
        lines += [f"# {n}" for n in self.notes]
        lines.append(",".join(LOG_COLUMNS))
        return "\n".join(lines) + "\n"

    @staticmethod
    def _fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def append(self, **row):
        unknown = set(row) - set(LOG_COLUMNS)
        if unknown:
            raise ValueError(f"unknown log columns {sorted(unknown)}")
        full = {c: row.get(c) for c in LOG_COLUMNS}
        self.rows.append(full)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(",".join(self._fmt(full[c]) for c in LOG_COLUMNS) + "\n")

    def to_csv(self):
        buf = io.StringIO()
        buf.write(self._header())
        for row in self.rows:
            buf.write(",".join(self._fmt(row[c]) for c in LOG_COLUMNS) + "\n")
        return buf.getvalue()

    def where(self, **conds):
        return [r for r in self.rows if all(r[k] == v for k, v in conds.items())]

    def epoch_rows(self, phase="adapt"):
        """Rows carrying per-epoch summaries (those with ``src_dice`` set)."""
        return [r for r in self.rows if r["phase"] == phase and r["src_dice"] is not None]

    @staticmethod
    def read(path):
        with open(path, newline="") as fh:
            lines = [line for line in fh if not line.startswith("#")]
        rows = []
        for raw in csv.DictReader(lines):
            row = {}
            for c in LOG_COLUMNS:
                v = raw.get(c, "")
                if c == "phase":
                    row[c] = v
                elif c in ("epoch", "inner_iter"):
                    row[c] = int(v) if v else None
                else:
                    row[c] = float(v) if v else None
            rows.append(row)
        return rows


# ---------------------------------------------------------------------------
# helpers


def _tensor(x, dtype):
    return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)


def predict_proba(params, X, config, batch_size=16):
    """Generator probabilities (N, H, W) as float64 NumPy, no graph recorded."""
    dtype = next(iter(params.values())).dtype
    out = []
    with torch.no_grad():
        for i in range(0, len(X), batch_size):
            xb = _tensor(X[i : i + batch_size], dtype)
            out.append(generator_forward(params, xb, config)[:, 0].to(torch.float64).numpy())
    return np.concatenate(out) if out else np.zeros((0,) + tuple(np.shape(X)[-2:]))


def mean_dice(params, X, Y, config):
    """Mean per-sample Dice of the 0.5-thresholded predictions."""
    P = predict_proba(params, X, config) >= 0.5
    return float(np.mean([dsc(y.astype(np.uint8), p.astype(np.uint8)) for y, p in zip(Y, P)]))


def _check_loss(value, what):
    if not math.isfinite(value):
        raise TrainingDivergenceError(f"{what} became non-finite ({value})")


def _source_batch(state, data, idx):
    """Images/masks for ``idx``, augmented when configured."""
    X, Y = data.Xs[idx], data.Ys[idx]
    if not state.config.augment:
        return X, Y
    from .data_synth import DomainSample

    xs, ys = [], []
    for x, y in zip(X, Y):
        s = augment(DomainSample(x, y.astype(np.uint8), "", ""), state.rng)
        xs.append(s.image)
        ys.append(s.mask.astype(np.float64))
    return np.stack(xs), np.stack(ys)


def _monitor_predictions(state, data):
    P = predict_proba(state.gen, data.Xt[state.monitor_idx], state.config.gen_config())
    if state.config.monitor_binarize:
        return (P >= 0.5).astype(np.uint8)
    return P


# ---------------------------------------------------------------------------
# pre-training


def pretrain(data, config, training_log=None, state=None):
    """Supervised source training followed by freezing ``A0``.

    Returns a :class:`TrainerState` whose monitor holds the binarized
    initial predictions on a fixed, seeded subset of target images.
    """
    config = config.validate()
    state = state or TrainerState.initial(config)
    gcfg = config.gen_config()
    weights = config.loss_weights()
    dtype = config.torch_dtype
    n = len(data.Xs)
    for epoch in range(1, config.pretrain_epochs + 1):
        order = state.rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            X, Y = _source_batch(state, data, idx)
            p = generator_forward(state.gen, _tensor(X, dtype), gcfg)
            loss = seg_loss(p[:, 0], _tensor(Y, dtype), weights)
            _check_loss(loss.item(), "segmentation loss")
            grads = backward(loss, state.gen)
            state.gen, state.gen_seg_moments = adam_step(state.gen, grads, state.gen_seg_moments, config.lr_seg)
            losses.append(loss.item())
        state.check_finite()
        row = dict(phase="pretrain", epoch=epoch, seg_loss=float(np.mean(losses)))
        if data.Xv is not None:
            row["src_dice"] = mean_dice(state.gen, data.Xv, data.Yv, gcfg)
        if data.Xe is not None:
            row["tgt_dice"] = mean_dice(state.gen, data.Xe, data.Ye, gcfg)
        log.info("pretrain epoch %d: %s", epoch, row)
        if training_log is not None:
            training_log.append(**row)

    m = min(config.monitor_size, len(data.Xt))
    mon_rng = np.random.default_rng([config.seed, 0x4D4F4E])
    state.monitor_idx = np.sort(mon_rng.choice(len(data.Xt), size=m, replace=False))
    A0 = _monitor_predictions(state, data)
    if not config.monitor_binarize:
        A0 = (A0 >= 0.5).astype(np.uint8)
    state.monitor = MonitorState(
        A0, k=config.window, eps1=config.eps1, eps2=config.eps2, min_epochs=config.min_adapt_epochs
    )
    if data.Xv is not None:
        state.pretrain_src_dice = mean_dice(state.gen, data.Xv, data.Yv, gcfg)
    return state


# ---------------------------------------------------------------------------
# adaptation


def _disc_step(state, images, P, label, dcfg):
    cfg = state.config
    targets = flip_labels(np.full(len(images), label), cfg.flip_prob, state.rng)
    inp = build_discriminator_input_torch(images, P, cfg.encoding)
    loss = adversarial_bce(discriminator_forward(state.disc, inp, dcfg), targets)
    _check_loss(loss.item(), "discriminator loss")
    grads = backward(loss, state.disc)
    state.disc, state.disc_moments = adam_step(state.disc, grads, state.disc_moments, cfg.lr_disc)
    return loss.item()


def _gen_adv_step(state, images, p, gcfg, dcfg):
    cfg = state.config
    if p is None:
        p = generator_forward(state.gen, images, gcfg)
    inp = build_discriminator_input_torch(images, p, cfg.encoding)
    loss = gen_adv_loss(discriminator_forward(state.disc, inp, dcfg))
    _check_loss(loss.item(), "generator adversarial loss")
    grads = backward(loss, state.gen)
    state.gen, state.gen_adv_moments = adam_step(state.gen, grads, state.gen_adv_moments, cfg.lr_adv)
    return loss.item()


def adapt_inner_iteration(state, source_batch, target_batch, target_batch2):
    """The three sequential updates of one adaptation iteration.

    ``source_batch`` is ``(X, Y)``; the target batches are image arrays.
    Returns ``(seg_loss, disc_loss, gen_adv_loss)`` where ``disc_loss`` is
    the sum of the real- and fake-term losses and ``gen_adv_loss`` the mean
    of the two generator adversarial steps.
    """
    if state.monitor is None:
        raise UsageError("adaptation requires a pretrained state (call pretrain first)")
    cfg = state.config
    gcfg, dcfg = cfg.gen_config(), cfg.disc_config()
    dtype = cfg.torch_dtype
    Xs, Ys = _tensor(source_batch[0], dtype), _tensor(source_batch[1], dtype)
    Xt, Xt2 = _tensor(target_batch, dtype), _tensor(target_batch2, dtype)

    # (1) source: segmentation step for G, "real" step for D
    p = generator_forward(state.gen, Xs, gcfg)
    loss_seg = seg_loss(p[:, 0], Ys, cfg.loss_weights())
    _check_loss(loss_seg.item(), "segmentation loss")
    grads = backward(loss_seg, state.gen)
    state.gen, state.gen_seg_moments = adam_step(state.gen, grads, state.gen_seg_moments, cfg.lr_seg)
    d_real = _disc_step(state, Xs, Ys[:, None], REAL, dcfg)

    # (2) target: "fake" step for D, adversarial step for G
    p = generator_forward(state.gen, Xt, gcfg)
    d_fake = _disc_step(state, Xt, p.detach(), FAKE, dcfg)
    g1 = _gen_adv_step(state, Xt, p, gcfg, dcfg)

    # (3) fresh target batch: adversarial step for G only
    g2 = _gen_adv_step(state, Xt2, None, gcfg, dcfg)
    return loss_seg.item(), d_real + d_fake, 0.5 * (g1 + g2)


class _Cycler:
    """Endless seeded shuffled index stream over ``n`` items."""

    def __init__(self, n, rng):
        self.n, self.rng = n, rng
        self.order, self.pos = rng.permutation(n), 0

    def take(self, k):
        out = []
        while len(out) < k:
            if self.pos >= self.n:
                self.order, self.pos = self.rng.permutation(self.n), 0
            take = min(k - len(out), self.n - self.pos)
            out.extend(self.order[self.pos : self.pos + take])
            self.pos += take
        return np.sort(np.asarray(out))


@dataclass
class UDAResult:
    state: TrainerState
    log: TrainingLog
    converged: bool
    stop_epoch: int


def run_uda(state, data, training_log=None, checkpoint_dir=None, max_epochs=None):
    """Adversarial adaptation with monitored stopping.

    Returns a :class:`UDAResult`; ``converged`` is False when the loop hit
    ``max_adapt_epochs`` without the stopping rule firing.
    """
    if state.monitor is None:
        raise UsageError("run_uda requires a pretrained state (call pretrain first)")
    cfg = state.config
    gcfg = cfg.gen_config()
    training_log = training_log if training_log is not None else TrainingLog()
    max_epochs = max_epochs or cfg.max_adapt_epochs
    bs = cfg.batch_size
    src = _Cycler(len(data.Xs), state.rng)
    tgt = _Cycler(len(data.Xt), state.rng)

    def epoch_metrics():
        out = {}
        if data.Xv is not None:
            out["src_dice"] = mean_dice(state.gen, data.Xv, data.Yv, gcfg)
        if data.Xe is not None:
            out["tgt_dice"] = mean_dice(state.gen, data.Xe, data.Ye, gcfg)
        return out

    training_log.append(phase="adapt", epoch=0, inner_iter=0, **epoch_metrics())
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        state.epoch = epoch
        rows = []
        for j in range(1, cfg.inner_iters + 1):
            sb = _source_batch(state, data, src.take(bs))
            tb, tb2 = data.Xt[tgt.take(bs)], data.Xt[tgt.take(bs)]
            l_seg, l_disc, l_gen = adapt_inner_iteration(state, sb, tb, tb2)
            d = state.monitor.record(_monitor_predictions(state, data))
            rows.append(dict(phase="adapt", epoch=epoch, inner_iter=j, d_j=d,
                             seg_loss=l_seg, disc_loss=l_disc, gen_adv_loss=l_gen))
        state.check_finite()
        rows[-1]["sigma2"] = state.monitor.variance()
        rows[-1]["mu"] = window_mean(state.monitor.d_history, state.monitor.k)
        rows[-1].update(epoch_metrics())
        for r in rows:
            training_log.append(**r)
        log.info("adapt epoch %d: d=%.4f sigma2=%s", epoch, state.monitor.latest, rows[-1]["sigma2"])
        if checkpoint_dir is not None:
            save_state(Path(checkpoint_dir) / "latest.ckpt", state)
        if should_stop(state.monitor, epoch):
            converged = True
            break
    if checkpoint_dir is not None:
        save_state(Path(checkpoint_dir) / "final.ckpt", state, converged=converged)
    return UDAResult(state, training_log, converged, epoch)


def state_tensors(state):
    """Flat ``{name: tensor}`` view of everything needed to resume."""
    out = OrderedDict()
    for prefix, params in (("gen", state.gen), ("disc", state.disc)):
        for k, v in params.items():
            out[f"{prefix}/{k}"] = v.detach()
    for prefix, mom in (("gen_seg", state.gen_seg_moments), ("gen_adv", state.gen_adv_moments),
                        ("disc", state.disc_moments)):
        for k in mom.m:
            out[f"{prefix}.m/{k}"] = mom.m[k]
            out[f"{prefix}.v/{k}"] = mom.v[k]
        out[f"{prefix}.t"] = torch.tensor([mom.t], dtype=torch.int64)
    if state.monitor is not None:
        out["monitor/A0"] = torch.from_numpy(np.asarray(state.monitor.A0, dtype=np.uint8).copy())
        out["monitor/idx"] = torch.from_numpy(np.asarray(state.monitor_idx, dtype=np.int64))
    return out


def params_from_tensors(tensors, prefix="gen", requires_grad=False):
    out = OrderedDict()
    head = prefix + "/"
    for k, v in tensors.items():
        if k.startswith(head):
            out[k[len(head):]] = v.clone().requires_grad_(requires_grad)
    return out


def _moments_from_tensors(tensors, prefix):
    m = params_from_tensors(tensors, prefix + ".m")
    v = params_from_tensors(tensors, prefix + ".v")
    return AdamMoments(m, v, int(tensors[prefix + ".t"][0]))


def save_state(path, state, **meta):
    """Checkpoint everything needed to resume: params, moments, rng, monitor."""
    full = {
        "config": asdict(state.config),
        "epoch": state.epoch,
        "rng": state.rng.bit_generator.state,
        "pretrain_src_dice": state.pretrain_src_dice,
        "d_history": list(state.monitor.d_history) if state.monitor is not None else None,
    }
    full.update(meta)
    save_checkpoint(path, state_tensors(state), meta=full)


def load_state(path):
    """Inverse of :func:`save_state`; returns ``(state, meta)``."""
    from .checkpoint import load_checkpoint

    tensors, meta = load_checkpoint(path)
    try:
        config = TrainConfig(**meta["config"]).validate()
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a training checkpoint ({exc})") from None
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    state = TrainerState(
        config,
        params_from_tensors(tensors, "gen", requires_grad=True),
        params_from_tensors(tensors, "disc", requires_grad=True),
        _moments_from_tensors(tensors, "gen_seg"),
        _moments_from_tensors(tensors, "gen_adv"),
        _moments_from_tensors(tensors, "disc"),
        rng,
        epoch=int(meta.get("epoch", 0)),
        pretrain_src_dice=meta.get("pretrain_src_dice"),
    )
    if "monitor/A0" in tensors:
        state.monitor_idx = tensors["monitor/idx"].numpy().copy()
        state.monitor = MonitorState(
            tensors["monitor/A0"].numpy().copy(),
            k=config.window,
            eps1=config.eps1,
            eps2=config.eps2,
            min_epochs=config.min_adapt_epochs,
            d_history=list(meta.get("d_history") or []),
        )
    return state, meta


def with_encoding(state, encoding):
    """Copy of ``state`` whose discriminator is rebuilt for ``encoding``.

    The generator, its moments, the monitor and the rng stream are copied
    unchanged, so ablation variants start from the same pretrained point.
    """
    new = copy.deepcopy(state)
    new.config = replace(state.config, encoding=encoding).validate()
    disc = init_params(new.config.disc_config(), new.config.seed + 1, new.config.torch_dtype)
    for p in disc.values():
        p.requires_grad_(True)
    new.disc, new.disc_moments = disc, AdamMoments.zeros_like(disc)
    return new
