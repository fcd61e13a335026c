"""TOML experiment configuration with schema validation.

Every table maps onto a dataclass; unknown keys and wrongly-typed values are
rejected.  A top-level ``seed`` fills any seed the file leaves unset, so the
resolved config (written to each run's manifest) lists every seed explicitly.
"""
import dataclasses
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .data import FS_NYC_BBOX, GEOLIFE_BBOX, BoundingBox
from .dp import DpConfig
from .errors import ConfigurationError
from .gan import DiscriminatorConfig, GeneratorConfig, TrainConfig

DATASET_KINDS = ("fs", "geolife", "toy", "canonical")
DEFAULT_BBOX = {"fs": FS_NYC_BBOX, "geolife": GEOLIFE_BBOX, "toy": FS_NYC_BBOX}


@dataclass
class ToyConfig:
    centers: tuple = ((0.3, 0.3), (0.7, 0.7))
    spread: float = 0.05
    step: float = 0.01
    per_cluster: int = 250
    length: int = 144
    seed: int = None


@dataclass
class DatasetConfig:
    kind: str = "toy"
    path: str = None
    bbox: tuple = None
    max_len: int = 144
    min_len: int = 1
    toy: ToyConfig = field(default_factory=ToyConfig)

    def resolved_bbox(self):
        if self.bbox is not None:
            return BoundingBox(*self.bbox)
        return DEFAULT_BBOX.get(self.kind)


@dataclass
class MetricConfig:
    n_projections: int = 100
    swd_samples: int = 10_000
    seed: int = None


@dataclass
class ExperimentSection:
    folds: int = 5
    seed: int = None
    generation_seed: int = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dp: DpConfig = None
    metrics: MetricConfig = field(default_factory=MetricConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def resolve(self, check_paths=True):
        """Fill derived defaults and validate; returns ``self``."""
        ds = self.dataset
        if ds.kind not in DATASET_KINDS:
            raise ConfigurationError(f"dataset.kind must be one of {DATASET_KINDS}, got {ds.kind!r}")
        if ds.kind != "toy":
            if not ds.path:
                raise ConfigurationError(f"dataset.path is required for kind {ds.kind!r}")
            if check_paths and not os.path.exists(ds.path):
                raise ConfigurationError(f"dataset.path does not exist: {ds.path}")
        if ds.kind == "canonical" and ds.bbox is None:
            raise ConfigurationError("dataset.bbox is required for canonical datasets")
        if ds.bbox is not None:
            if len(ds.bbox) != 4:
                raise ConfigurationError("dataset.bbox must be [lat_min, lat_max, lon_min, lon_max]")
            try:
                BoundingBox(*ds.bbox)
            except ValueError as e:
                raise ConfigurationError(str(e)) from None
        if not 1 <= ds.min_len <= ds.max_len:
            raise ConfigurationError("need 1 <= dataset.min_len <= dataset.max_len")
        if ds.toy.seed is None:
            ds.toy.seed = self.seed
        for c in ds.toy.centers:
            if len(c) != 2 or not all(0 <= v <= 1 for v in c):
                raise ConfigurationError(f"toy centers must lie in the unit square, got {c}")
        self.train.max_len = ds.max_len
        self.train.validate()
        if self.metrics.seed is None:
            self.metrics.seed = self.seed
        ex = self.experiment
        if ex.seed is None:
            ex.seed = self.seed
        if ex.generation_seed is None:
            ex.generation_seed = self.seed + 1
        if ex.folds < 2:
            raise ConfigurationError("experiment.folds must be >= 2")
        if self.dp is not None:
            self.dp.validate()
        return self

    def as_dict(self):
        return _to_plain(dataclasses.asdict(self))


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{where}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = _default(fields[name])
        nested = _nested_type(cls, name)
        key = f"{where}.{name}" if where else name
        if nested is not None:
            kwargs[name] = _build(nested, value, key)
        else:
            kwargs[name] = _coerce(value, default, key)
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"[{where}]: {e}") from None


_NESTED = {
    (ExperimentConfig, "dataset"): DatasetConfig,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "dp"): DpConfig,
    (ExperimentConfig, "metrics"): MetricConfig,
    (ExperimentConfig, "experiment"): ExperimentSection,
    (DatasetConfig, "toy"): ToyConfig,
    (TrainConfig, "generator"): GeneratorConfig,
    (TrainConfig, "discriminator"): DiscriminatorConfig,
}


def _nested_type(cls, name):
    return _NESTED.get((cls, name))


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def _coerce(value, default, key):
    if default is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, list)
        value = tuple(tuple(v) if isinstance(v, list) else v for v in value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigurationError(f"{key}: expected {type(default).__name__}, got {value!r}")
    return value


def config_from_dict(data, check_paths=True, seed=None):
    data = dict(data)
    if seed is not None:
        data["seed"] = seed
    # the top-level seed is the default for the training seed
    train = data.setdefault("train", {})
    if isinstance(train, dict):
        train.setdefault("seed", data.get("seed", 0))
    if "dp" in data and data["dp"].get("enabled", True) is False:
        data.pop("dp")
    elif "dp" in data:
        data["dp"] = {k: v for k, v in data["dp"].items() if k != "enabled"}
    return _build(ExperimentConfig, data, "").resolve(check_paths)


def load_config(path, check_paths=True, seed=None):
    """Parse and validate a TOML experiment config.  Relative dataset paths
    are resolved against the config file's directory."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: {e}") from None
    ds = data.get("dataset", {})
    if isinstance(ds, dict) and ds.get("path") and not os.path.isabs(ds["path"]):
        ds["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), ds["path"])
    return config_from_dict(data, check_paths, seed)
