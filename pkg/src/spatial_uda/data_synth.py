"""Synthetic two-modality lesion phantoms with controllable domain shift.

Each phantom is a textured head ellipse with 1-5 bright elliptical lesions in
modality A and the contrast-inverted head (lesions dark) in modality B.  A
domain is an intensity transform ``clip(a * I**gamma + b + noise, 0, 1)``
applied per channel, covering the intensity, contrast and noise shift axes.

Everything is a pure function of seeds: a dataset is reproducible from its
master seed, and each sample draws from its own child generator.
"""

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_in_range
from .exceptions import ConfigError, DegenerateInputError, InvalidInputError

__all__ = [
    "DomainSpec",
    "DomainSample",
    "AugmentRanges",
    "SOURCE_SPECS",
    "TARGET_SPEC",
    "BenchmarkLayout",
    "canonical_phantom",
    "apply_domain",
    "generate_phantom",
    "sample_rng",
    "zscore_normalize",
    "ZScoreNormalizer",
    "augment",
    "random_affine",
    "make_benchmark",
]


@dataclass(frozen=True)
class DomainSpec:
    name: str
    scale: float = 1.0
    bias: float = 0.0
    gamma: float = 1.0
    noise_sigma: float = 0.0
    texture_seed: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError(f"domain {self.name}: scale must be > 0")
        if not self.gamma > 0:
            raise ConfigError(f"domain {self.name}: gamma must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError(f"domain {self.name}: noise_sigma must be >= 0")


@dataclass
class DomainSample:
    """One 2-channel image with an optional binary lesion mask."""

    image: np.ndarray  # (2, H, W) float64
    mask: np.ndarray | None  # (H, W) uint8 in {0, 1}
    domain_id: str
    sample_id: str

    @property
    def has_label(self):
        return self.mask is not None

    def replace(self, **changes):
        values = {**self.__dict__, **changes}
        return DomainSample(**values)


SOURCE_SPECS = (
    DomainSpec("src_a", scale=1.0, bias=0.0, gamma=1.0, noise_sigma=0.02, texture_seed=11),
    DomainSpec("src_b", scale=0.9, bias=0.05, gamma=1.1, noise_sigma=0.03, texture_seed=12),
)
TARGET_SPEC = DomainSpec("tgt", scale=0.7, bias=0.15, gamma=1.6, noise_sigma=0.08, texture_seed=21)

_TISSUE_LEVEL = 0.4
_TISSUE_TEXTURE = 0.1
_LESION_RANGE = (0.55, 0.75)
_LESION_RADIUS = (2.0, 6.0)


def _ellipse(shape, cy, cx, ry, rx, theta=0.0):
    yy, xx = np.mgrid[: shape[0], : shape[1]].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    return u * u + v * v <= 1.0


def canonical_phantom(rng, size=64):
    """Noise-free phantom before any domain transform.

    Returns ``(image, mask)`` with image (2, size, size) in [0, 1] and mask
    (size, size) uint8.  Lesions are placed fully inside an eroded head
    ellipse so that they never touch the skull boundary.
    """
    if size < 16:
        raise ConfigError(f"phantom size must be >= 16, got {size}")
    shape = (size, size)
    c = (size - 1) / 2.0
    head = _ellipse(
        shape,
        c + rng.uniform(-1.5, 1.5),
        c + rng.uniform(-1.5, 1.5),
        size * rng.uniform(0.40, 0.46),
        size * rng.uniform(0.32, 0.40),
        rng.uniform(-0.2, 0.2),
    )
    texture = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=size / 16.0)
    texture /= max(np.abs(texture).max(), 1e-12)
    tissue = np.clip(_TISSUE_LEVEL + _TISSUE_TEXTURE * texture, 0.0, 1.0)

    inner = ndimage.binary_erosion(head, iterations=int(_LESION_RADIUS[1]) + 2)
    candidates = np.argwhere(inner)
    mask = np.zeros(shape, dtype=bool)
    lesion_value = np.zeros(shape)
    for _ in range(int(rng.integers(1, 6))):
        cy, cx = candidates[rng.integers(len(candidates))]
        ry, rx = rng.uniform(*_LESION_RADIUS, size=2)
        blob = _ellipse(shape, cy, cx, ry, rx, rng.uniform(0, np.pi)) & head
        lesion_value[blob] = rng.uniform(*_LESION_RANGE)
        mask |= blob

    mod_a = np.where(head, tissue, 0.0)
    mod_a = np.where(mask, lesion_value, mod_a)
    mod_b = np.where(head, 1.0 - tissue, 0.0)
    mod_b = np.where(mask, 1.0 - lesion_value, mod_b)
    return np.stack([mod_a, mod_b]), mask.astype(np.uint8)


def apply_domain(image, spec, rng):
    """``clip(a * I**gamma + b + N(0, sigma^2), 0, 1)`` per channel."""
    out = spec.scale * np.power(image, spec.gamma) + spec.bias
    if spec.noise_sigma > 0:
        out = out + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    return np.clip(out, 0.0, 1.0)


def generate_phantom(rng, spec, size=64, sample_id="", with_label=True):
    """Draw a canonical phantom and push it through the domain transform."""
    image, mask = canonical_phantom(rng, size)
    image = apply_domain(image, spec, rng)
    return DomainSample(image, mask if with_label else None, spec.name, sample_id)


def sample_rng(master_seed, texture_seed, split_index, index):
    """Child generator for one sample, independent of generation order."""
    return np.random.default_rng([int(master_seed), int(texture_seed), int(split_index), int(index)])


def zscore_normalize(sample, tol=1e-12):
    """Per-sample, per-channel standardization to mean 0 / std 1."""
    image = np.asarray(sample.image, dtype=np.float64)
    mean = image.mean(axis=(1, 2), keepdims=True)
    std = image.std(axis=(1, 2), keepdims=True)
    if np.any(std <= tol):
        raise DegenerateInputError(f"sample {sample.sample_id!r} has a zero-variance channel")
    return sample.replace(image=(image - mean) / std)


class ZScoreNormalizer(TransformerMixin, BaseEstimator):
    """Stateless transformer standardizing each (C, H, W) image channel-wise."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4:
            raise InvalidInputError(f"expected (N, C, H, W), got {X.shape}")
        mean = X.mean(axis=(2, 3), keepdims=True)
        std = X.std(axis=(2, 3), keepdims=True)
        if np.any(std <= 1e-12):
            raise DegenerateInputError("zero-variance channel")
        return (X - mean) / std


@dataclass(frozen=True)
class AugmentRanges:
    """Half-widths of the uniform augmentation draws.

    Rotation in degrees, shear as a dimensionless factor, scale as a
    deviation from 1 (``scale=0.1`` means a factor in [0.9, 1.1]).
    """

    rotation: float = 15.0
    shear: float = 0.1
    scale: float = 0.1

    def __post_init__(self):
        check_in_range(self.rotation, 0.0, 180.0, "rotation")
        check_in_range(self.shear, 0.0, 1.0, "shear")
        check_in_range(self.scale, 0.0, 0.5, "scale")

    @property
    def is_identity(self):
        return self.rotation == 0 and self.shear == 0 and self.scale == 0


def random_affine(rng, ranges):
    """2x2 output->input matrix combining rotation, shear and isotropic scale."""
    theta = np.deg2rad(rng.uniform(-ranges.rotation, ranges.rotation))
    shear = rng.uniform(-ranges.shear, ranges.shear)
    scale = 1.0 + rng.uniform(-ranges.scale, ranges.scale)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    sh = np.array([[1.0, shear], [0.0, 1.0]])
    return rot @ sh / scale


def augment(sample, rng, ranges=None):
    """Apply one random affine transform to both channels and the mask.

    Interpolation is bilinear; the mask is re-binarized at 0.5.  Image
    borders are filled by nearest-edge extension.
    """
    ranges = ranges or AugmentRanges()
    if ranges.is_identity:
        return sample.replace(image=sample.image.copy(), mask=None if sample.mask is None else sample.mask.copy())
    matrix = random_affine(rng, ranges)
    h, w = sample.image.shape[-2:]
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - matrix @ center

    def warp(plane, mode):
        return ndimage.affine_transform(plane, matrix, offset=offset, order=1, mode=mode)

    image = np.stack([warp(ch, "nearest") for ch in sample.image])
    mask = None
    if sample.mask is not None:
        mask = (warp(sample.mask.astype(np.float64), "constant") >= 0.5).astype(np.uint8)
    return sample.replace(image=image, mask=mask)


@dataclass(frozen=True)
class BenchmarkLayout:
    """Split sizes of the reference experiment."""

    size: int = 64
    source_train: int = 100
    source_val: int = 20
    target_adapt: int = 50
    target_test: int = 30
    sources: tuple = SOURCE_SPECS
    target: DomainSpec = TARGET_SPEC

    def splits(self):
        """``(split_name, split_index, spec, count, labeled)`` for every block."""
        out = []
        for spec in self.sources:
            out.append(("src-train", 0, spec, self.source_train, True))
            out.append(("src-val", 1, spec, self.source_val, True))
        out.append(("tgt-adapt", 2, self.target, self.target_adapt, False))
        out.append(("tgt-test", 3, self.target, self.target_test, True))
        return out

    def to_dict(self):
        d = asdict(self)
        d["sources"] = [asdict(s) for s in self.sources]
        d["target"] = asdict(self.target)
        return d


def make_benchmark(seed, out_dir=None, layout=None):
    """Generate the reference benchmark; optionally write it to ``out_dir``.

    Returns ``(manifest, samples)`` where ``samples`` maps sample id to
    :class:`DomainSample`.  Adaptation-split samples never carry a mask.
    """
    from .sample_io import Manifest, ManifestEntry, write_sample

    layout = layout or BenchmarkLayout()
    entries = []
    samples = {}
    for split, split_index, spec, count, labeled in layout.splits():
        for i in range(count):
            sid = f"{spec.name}-{split}-{i:04d}"
            rng = sample_rng(seed, spec.texture_seed, split_index, i)
            s = generate_phantom(rng, spec, layout.size, sample_id=sid, with_label=labeled)
            samples[sid] = s
            entries.append(ManifestEntry(sid, spec.name, split, labeled, f"samples/{sid}.smp"))
    manifest = Manifest(seed=seed, layout=layout, entries=entries)
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "samples").mkdir(parents=True, exist_ok=True)
        for e in entries:
            write_sample(out_dir / e.path, samples[e.sample_id])
        manifest.write(out_dir / "manifest.txt")
    return manifest, samples
