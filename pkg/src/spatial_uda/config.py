"""Experiment configuration parsed from YAML.

A config file has up to five top-level keys, all optional::

    seed: 1                    # dataset and training seed
    seeds: [1, 2, 3]           # seeds used by the ablate command
    data:                      # benchmark layout and location
      dir: null                # default: <out>/data
      size: 64
      source_train: 100        # per source domain
      source_val: 20           # per source domain
      target_adapt: 50
      target_test: 30
    domains:                   # intensity transforms; omitted -> built-ins
      sources: [{name: src_a, scale: 1.0, ...}, ...]
      target: {name: tgt, ...}
    train: {...}               # any TrainConfig field
    ablation:
      encodings: [mask, edge, full]

Unknown keys at any level raise :class:`ConfigError`.  Every field has a
default, so an empty file is a valid config describing the reference
experiment at library defaults.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .data_synth import SOURCE_SPECS, TARGET_SPEC, BenchmarkLayout, DomainSpec
from .exceptions import ConfigError
from .spatial_encoding import ENCODING_CHANNELS, discriminator_channels
from .training import TrainConfig

__all__ = ["ExperimentConfig", "load_config", "ABLATION_VARIANTS"]

# ablation rows: name -> encoding mode (3, 5 and 8 discriminator channels)
ABLATION_VARIANTS = {"mask": "mask", "edge": "edge", "full": "full"}

_DATA_KEYS = ("dir", "size", "source_train", "source_val", "target_adapt", "target_test")
_DOMAIN_KEYS = tuple(f.name for f in fields(DomainSpec))


def _reject_unknown(section, mapping, allowed):
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown keys {unknown}")
    return mapping


def _domain(section, raw):
    raw = _reject_unknown(section, raw, _DOMAIN_KEYS)
    if "name" not in raw:
        raise ConfigError(f"{section}: 'name' is required")
    try:
        return DomainSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    seeds: tuple = (1, 2, 3)
    data_dir: str | None = None
    layout: BenchmarkLayout = field(default_factory=BenchmarkLayout)
    train: TrainConfig = field(default_factory=TrainConfig)
    encodings: tuple = ("mask", "edge", "full")

    def __post_init__(self):
        for enc in self.encodings:
            if enc not in ENCODING_CHANNELS:
                raise ConfigError(f"ablation encoding {enc!r} not in {sorted(ENCODING_CHANNELS)}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        # the top-level seed drives both data generation and training
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))

    def with_seed(self, seed):
        """Copy with the dataset and training seed set to ``seed``."""
        return replace(self, seed=int(seed))

    def resolve_data_dir(self, out_dir):
        return Path(self.data_dir) if self.data_dir else Path(out_dir) / "data"

    def to_dict(self):
        layout = self.layout
        return {
            "seed": self.seed,
            "seeds": list(self.seeds),
            "data": {
                "dir": self.data_dir,
                "size": layout.size,
                "source_train": layout.source_train,
                "source_val": layout.source_val,
                "target_adapt": layout.target_adapt,
                "target_test": layout.target_test,
            },
            "domains": {
                "sources": [asdict(s) for s in layout.sources],
                "target": asdict(layout.target),
            },
            "train": asdict(self.train),
            "ablation": {"encodings": list(self.encodings)},
        }

    @classmethod
    def from_dict(cls, raw):
        raw = _reject_unknown("config", raw, ("seed", "seeds", "data", "domains", "train", "ablation"))
        data = _reject_unknown("data", raw.get("data"), _DATA_KEYS)
        domains = _reject_unknown("domains", raw.get("domains"), ("sources", "target"))
        train_raw = _reject_unknown("train", raw.get("train"), TrainConfig.field_names())
        ablation = _reject_unknown("ablation", raw.get("ablation"), ("encodings",))

        sources = SOURCE_SPECS
        if "sources" in domains:
            if not isinstance(domains["sources"], list) or not domains["sources"]:
                raise ConfigError("domains.sources must be a non-empty list")
            sources = tuple(_domain(f"domains.sources[{i}]", d) for i, d in enumerate(domains["sources"]))
        target = _domain("domains.target", domains["target"]) if "target" in domains else TARGET_SPEC
        layout_kw = {k: int(v) for k, v in data.items() if k != "dir"}
        layout = BenchmarkLayout(sources=sources, target=target, **layout_kw)

        seed = int(raw.get("seed", 1))
        if "seed" in train_raw and int(train_raw["seed"]) != seed:
            raise ConfigError("train.seed must match the top-level seed (or be omitted)")
        train = TrainConfig(**{**train_raw, "seed": seed})
        train.validate()
        return cls(
            seed=seed,
            seeds=tuple(int(s) for s in raw.get("seeds", (1, 2, 3))),
            data_dir=data.get("dir"),
            layout=layout,
            train=train,
            encodings=tuple(ablation.get("encodings", ("mask", "edge", "full"))),
        )


def load_config(path=None):
    """Parse a YAML config file; ``None`` gives the all-defaults config."""
    if path is None:
        return ExperimentConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return ExperimentConfig.from_dict(raw or {})


def ablation_channels(encoding):
    return discriminator_channels(encoding)
