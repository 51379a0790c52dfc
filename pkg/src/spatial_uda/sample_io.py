"""On-disk sample files and the dataset manifest.

Sample file (``.smp``), all integers little-endian::

    offset  size       field
    0       4          magic b"SMP1"
    4       2          format version (uint16) = 1
    6       2          flags (uint16); bit 0 = mask present
    8       4          H (uint32)
    12      4          W (uint32)
    16      2          len(sample_id) (uint16), then UTF-8 bytes
    ..      2          len(domain_id) (uint16), then UTF-8 bytes
    ..      16*H*W     modality A then modality B, float64 row-major
    ..      H*W        mask plane, uint8 row-major (only when bit 0 set)

Manifest (``manifest.txt``) is UTF-8 text.  Lines starting with ``#`` are
metadata (``# key value`` or ``# domain name role k=v ...``); the first
non-comment line is the tab-separated header
``sample_id  domain_id  split  has_label  path`` followed by one row per
sample.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_synth import BenchmarkLayout, DomainSample, DomainSpec
from .exceptions import FormatError

__all__ = ["write_sample", "read_sample", "ManifestEntry", "Manifest", "load_split"]

MAGIC = b"SMP1"
VERSION = 1
FLAG_MASK = 1
_HEAD = struct.Struct("<4sHHII")


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def write_sample(path, sample):
    image = np.ascontiguousarray(sample.image, dtype="<f8")
    if image.ndim != 3 or image.shape[0] != 2:
        raise FormatError(f"sample image must be (2, H, W), got {image.shape}")
    _, h, w = image.shape
    flags = FLAG_MASK if sample.mask is not None else 0
    parts = [
        _HEAD.pack(MAGIC, VERSION, flags, h, w),
        _pack_str(sample.sample_id),
        _pack_str(sample.domain_id),
        image.tobytes(),
    ]
    if sample.mask is not None:
        parts.append(np.ascontiguousarray(sample.mask, dtype=np.uint8).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_sample(path):
    buf = Path(path).read_bytes()
    try:
        magic, version, flags, h, w = _HEAD.unpack_from(buf, 0)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = _HEAD.size
    strings = []
    for _ in range(2):
        (n,) = struct.unpack_from("<H", buf, pos)
        strings.append(buf[pos + 2 : pos + 2 + n].decode("utf-8"))
        pos += 2 + n
    n_img = 2 * h * w * 8
    expected = pos + n_img + (h * w if flags & FLAG_MASK else 0)
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    image = np.frombuffer(buf, dtype="<f8", count=2 * h * w, offset=pos).reshape(2, h, w)
    mask = None
    if flags & FLAG_MASK:
        mask = np.frombuffer(buf, dtype=np.uint8, count=h * w, offset=pos + n_img).reshape(h, w)
    return DomainSample(image.astype(np.float64), None if mask is None else mask.copy(), strings[1], strings[0])


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    domain_id: str
    split: str
    has_label: bool
    path: str


_COLUMNS = ("sample_id", "domain_id", "split", "has_label", "path")
_SPEC_FIELDS = ("scale", "bias", "gamma", "noise_sigma", "texture_seed")


@dataclass
class Manifest:
    seed: int
    layout: BenchmarkLayout
    entries: list = field(default_factory=list)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def counts(self):
        """``{(domain_id, split): n}``."""
        out = {}
        for e in self.entries:
            out[(e.domain_id, e.split)] = out.get((e.domain_id, e.split), 0) + 1
        return out

    def to_text(self):
        lines = ["# spatial-uda manifest v1", f"# seed {self.seed}", f"# size {self.layout.size}"]
        roles = [("source", s) for s in self.layout.sources] + [("target", self.layout.target)]
        for role, spec in roles:
            kv = " ".join(f"{k}={getattr(spec, k)!r}" for k in _SPEC_FIELDS)
            lines.append(f"# domain {spec.name} {role} {kv}")
        lines.append("\t".join(_COLUMNS))
        for e in self.entries:
            lines.append("\t".join([e.sample_id, e.domain_id, e.split, str(int(e.has_label)), e.path]))
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path):
        seed, size = None, None
        sources, target = [], None
        entries = []
        header_seen = False
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            if not raw.strip():
                continue
            if raw.startswith("#"):
                parts = raw[1:].split()
                if parts[:1] == ["seed"]:
                    seed = int(parts[1])
                elif parts[:1] == ["size"]:
                    size = int(parts[1])
                elif parts[:1] == ["domain"]:
                    name, role = parts[1], parts[2]
                    kv = dict(p.split("=", 1) for p in parts[3:])
                    spec = DomainSpec(
                        name,
                        scale=float(kv["scale"]),
                        bias=float(kv["bias"]),
                        gamma=float(kv["gamma"]),
                        noise_sigma=float(kv["noise_sigma"]),
                        texture_seed=int(kv["texture_seed"]),
                    )
                    if role == "source":
                        sources.append(spec)
                    else:
                        target = spec
                continue
            cols = raw.split("\t")
            if not header_seen:
                if tuple(cols) != _COLUMNS:
                    raise FormatError(f"{path}: unexpected header {cols}")
                header_seen = True
                continue
            if len(cols) != len(_COLUMNS):
                raise FormatError(f"{path}: malformed row {raw!r}")
            entries.append(ManifestEntry(cols[0], cols[1], cols[2], cols[3] == "1", cols[4]))
        if seed is None or size is None or target is None:
            raise FormatError(f"{path}: missing seed/size/domain metadata")
        counts = {}
        for e in entries:
            counts[e.split] = counts.get(e.split, 0) + 1
        n_src = max(len(sources), 1)
        layout = BenchmarkLayout(
            size=size,
            source_train=counts.get("src-train", 0) // n_src,
            source_val=counts.get("src-val", 0) // n_src,
            target_adapt=counts.get("tgt-adapt", 0),
            target_test=counts.get("tgt-test", 0),
            sources=tuple(sources),
            target=target,
        )
        return cls(seed=seed, layout=layout, entries=entries)


def load_split(data_dir, split, manifest=None):
    """Read every sample of ``split`` (in manifest order)."""
    data_dir = Path(data_dir)
    manifest = manifest or Manifest.read(data_dir / "manifest.txt")
    return [read_sample(data_dir / e.path) for e in manifest.split(split)]
