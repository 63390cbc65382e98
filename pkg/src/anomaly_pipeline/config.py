"""Run configuration: a single JSON document governing every stage.

One master seed drives model init, shuffling, and forest construction, so
a config plus a seed fully determines a run. The config hash covers every
semantically meaningful field (everything except the output directory) and
guards later stages against mixing artifacts from different runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ioutil import dump_json
from .ingest import DatasetSchema
from .nn.training import TrainConfig

FEATURE_SPACES = ("error+latent", "latent", "error")


def _require_keys(section: str, doc: dict, allowed: set[str]):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"config section {section!r} has unknown keys: {sorted(unknown)}")


def _build(section: str, cls, doc: dict, allowed: set[str], **extra):
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    _require_keys(section, doc, allowed)
    try:
        return cls(**doc, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config section {section!r}: {exc}") from exc


@dataclass(frozen=True)
class DatasetConfig:
    schema: str
    train_csv: str
    test_csv: str

    def load_schema(self) -> DatasetSchema:
        return DatasetSchema.load(self.schema)


@dataclass(frozen=True)
class MscnnOptions:
    """Conv-AE settings minus the grid extents, which come from the data."""

    filters_per_branch: int = 8
    latent_dim: int = 32
    pool_window: int = 2
    pool_stride: int = 2


@dataclass(frozen=True)
class LstmOptions:
    window: int = 8
    code_dim: int = 16
    hidden_size: int = 32
    stride: int = 1
    error_mode: str = "window"


@dataclass(frozen=True)
class DetectorSettings:
    """Threshold multiplier plus the stage-2 forest configuration."""

    k: float = 2.0
    contamination: float | None = None
    score_threshold: float | None = None
    tree_count: int = 100
    subsample_size: int = 256
    feature_space: str = "error+latent"

    def __post_init__(self):
        if not isinstance(self.k, (int, float)) or self.k < 0:
            raise ConfigError(f"threshold multiplier k must be >= 0, got {self.k!r}")
        # Contamination is the default decision rule when neither is given.
        if self.contamination is None and self.score_threshold is None:
            object.__setattr__(self, "contamination", 0.05)
        if self.contamination is not None and self.score_threshold is not None:
            raise ConfigError("give at most one of contamination / score_threshold")
        if self.contamination is not None and not 0.0 < self.contamination < 1.0:
            raise ConfigError(f"contamination must lie in (0, 1), got {self.contamination}")
        if self.score_threshold is not None and not 0.0 < self.score_threshold < 1.0:
            raise ConfigError(f"score_threshold must lie in (0, 1), got {self.score_threshold}")
        if self.tree_count < 1 or self.subsample_size < 2:
            raise ConfigError("tree_count must be >= 1 and subsample_size >= 2")
        if self.feature_space not in FEATURE_SPACES:
            raise ConfigError(
                f"feature_space must be one of {FEATURE_SPACES}, got {self.feature_space!r}"
            )


_TRAIN_KEYS = {"learning_rate", "epochs", "batch_size", "optimizer", "beta1", "beta2", "epsilon"}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: DatasetConfig | None = None
    mscnn: MscnnOptions = field(default_factory=MscnnOptions)
    mscnn_training: TrainConfig = field(default_factory=TrainConfig)
    lstm: LstmOptions = field(default_factory=LstmOptions)
    lstm_training: TrainConfig = field(default_factory=TrainConfig)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        _require_keys(
            "<root>", doc,
            {"seed", "dataset", "mscnn", "mscnn_training", "lstm", "lstm_training",
             "detector", "out_dir"},
        )
        if "seed" not in doc or not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise ConfigError("config requires an integer 'seed'")
        seed = doc["seed"]

        dataset = None
        if doc.get("dataset") is not None:
            dataset = _build("dataset", DatasetConfig, doc["dataset"],
                             {"schema", "train_csv", "test_csv"})

        mscnn = _build("mscnn", MscnnOptions, doc.get("mscnn", {}),
                       {"filters_per_branch", "latent_dim", "pool_window", "pool_stride"})
        lstm = _build("lstm", LstmOptions, doc.get("lstm", {}),
                      {"window", "code_dim", "hidden_size", "stride", "error_mode"})
        detector = _build("detector", DetectorSettings, doc.get("detector", {}),
                          {"k", "contamination", "score_threshold", "tree_count",
                           "subsample_size", "feature_space"})
        # Training sections never carry their own seed; the master seed rules.
        mscnn_training = _build("mscnn_training", TrainConfig,
                                doc.get("mscnn_training", {}), _TRAIN_KEYS, seed=seed)
        lstm_training = _build("lstm_training", TrainConfig,
                               doc.get("lstm_training", {}), _TRAIN_KEYS, seed=seed)

        out_dir = doc.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("out_dir must be a string path")
        return cls(seed=seed, dataset=dataset, mscnn=mscnn, mscnn_training=mscnn_training,
                   lstm=lstm, lstm_training=lstm_training, detector=detector, out_dir=out_dir)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def with_seed(self, seed: int) -> "RunConfig":
        """Master-seed override (the --seed flag), applied before hashing."""
        doc = self.to_dict()
        doc["seed"] = seed
        return RunConfig.from_dict(doc)

    def validate_paths(self):
        """Fail fast if the schema or raw CSVs are unresolvable."""
        if self.dataset is None:
            raise ConfigError("config has no dataset section")
        self.dataset.load_schema()
        for role, p in (("train_csv", self.dataset.train_csv),
                        ("test_csv", self.dataset.test_csv)):
            if not Path(p).is_file():
                raise ConfigError(f"dataset.{role} not found: {p}")

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "dataset": asdict(self.dataset) if self.dataset else None,
            "mscnn": asdict(self.mscnn),
            "mscnn_training": self._train_dict(self.mscnn_training),
            "lstm": asdict(self.lstm),
            "lstm_training": self._train_dict(self.lstm_training),
            "detector": asdict(self.detector),
        }
        if self.out_dir is not None:
            doc["out_dir"] = self.out_dir
        return doc

    @staticmethod
    def _train_dict(tc: TrainConfig) -> dict:
        d = asdict(tc)
        d.pop("seed", None)
        return d

    def config_hash(self) -> str:
        """sha256 over canonical JSON of everything except out_dir."""
        doc = self.to_dict()
        doc.pop("out_dir", None)
        return hashlib.sha256(dump_json(doc).encode("utf-8")).hexdigest()
