"""Two-stage detection: error thresholding, then isolation-forest correction.

Stage 1 splits test records on their temporal reconstruction error against
theta = mu + k*sigma computed from normal training errors. Stage 2 fits one
isolation forest per stage-1 partition: outliers inside the predicted-attack
set flip to normal, outliers inside the predicted-normal set flip to attack.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .config import DetectorSettings, RunConfig
from .conv_autoencoder import MscnnAutoencoder, MscnnConfig
from .errors import ConfigError, DataError, PipelineError
from .ingest import ATTACK, NORMAL, FeatureRecord, feature_map_stack, filter_normal, to_feature_map
from .isolation_forest import fit_forest, partition_outliers, score_batch
from .lstm_autoencoder import LstmAeConfig, LstmAutoencoder, make_sequences

FOREST_ATTACK_SEED_OFFSET = 101
FOREST_NORMAL_SEED_OFFSET = 202


@dataclass(frozen=True)
class Threshold:
    """theta = mu + k * sigma over normal training reconstruction errors."""

    mu: float
    sigma: float
    k: float = 2.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def theta(self) -> float:
        return self.mu + self.k * self.sigma

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "k": self.k, "theta": self.theta}

    @classmethod
    def from_dict(cls, doc: dict) -> "Threshold":
        return cls(mu=doc["mu"], sigma=doc["sigma"], k=doc["k"])


@dataclass
class DetectionVerdict:
    record_index: int
    reconstruction_error: float
    stage1_label: str
    stage2_label: str
    iforest_score: float | None = None
    ground_truth: str | None = None


def compute_threshold(train_errors: np.ndarray, k: float = 2.0) -> Threshold:
    """Population mean/std of normal training errors -> Threshold."""
    train_errors = np.asarray(train_errors, dtype=np.float64)
    if train_errors.size == 0:
        raise DataError("cannot compute a threshold from zero training errors")
    return Threshold(mu=float(train_errors.mean()), sigma=float(train_errors.std()), k=k)


def stage1_classify(errors: np.ndarray, threshold: Threshold) -> tuple[np.ndarray, np.ndarray]:
    """Partition record indices: error < theta -> normal, >= theta -> attack."""
    errors = np.asarray(errors, dtype=np.float64)
    idx = np.arange(errors.size)
    attack = errors >= threshold.theta
    return idx[~attack], idx[attack]


def build_stage2_features(errors: np.ndarray, latents: np.ndarray, feature_space: str) -> np.ndarray:
    """Rows the stage-2 forests see: error and/or latent columns per config."""
    errors = np.asarray(errors, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    if errors.ndim != 1 or latents.ndim != 2 or errors.size != latents.shape[0]:
        raise DataError(
            f"mismatched rows: {errors.shape} errors vs {latents.shape} latents"
        )
    if feature_space == "error":
        return errors[:, None]
    if feature_space == "latent":
        return latents
    return np.concatenate([errors[:, None], latents], axis=1)


@dataclass
class Stage2Result:
    final_normal: np.ndarray
    final_attack: np.ndarray
    scores: np.ndarray  # NaN where no forest scored the record
    flipped_to_normal: np.ndarray
    flipped_to_attack: np.ndarray


def stage2_correct(features: np.ndarray, normal_idx: np.ndarray, attack_idx: np.ndarray,
                   settings: DetectorSettings, seed: int) -> Stage2Result:
    """Dual-forest correction of the stage-1 partitions.

    The forest over the predicted-attack set hunts for records that do not
    isolate like the rest (likely normals); the forest over the
    predicted-normal set hunts for hidden attacks. Partitions with fewer
    than 2 rows pass through unchanged.
    """
    features = np.asarray(features, dtype=np.float64)
    normal_idx = np.asarray(normal_idx, dtype=np.intp)
    attack_idx = np.asarray(attack_idx, dtype=np.intp)
    scores = np.full(features.shape[0], np.nan)
    mode = {"contamination": settings.contamination, "score_threshold": settings.score_threshold}

    def correct(partition: np.ndarray, forest_seed: int) -> tuple[np.ndarray, np.ndarray]:
        if partition.size < 2:
            return partition, np.empty(0, dtype=np.intp)
        rows = features[partition]
        forest = fit_forest(rows, tree_count=settings.tree_count,
                            subsample_size=settings.subsample_size, seed=forest_seed)
        scores[partition] = score_batch(forest, rows)
        keep, flip = partition_outliers(forest, rows, **mode)
        return partition[keep], partition[flip]

    kept_attack, to_normal = correct(attack_idx, seed + FOREST_ATTACK_SEED_OFFSET)
    kept_normal, to_attack = correct(normal_idx, seed + FOREST_NORMAL_SEED_OFFSET)
    return Stage2Result(
        final_normal=np.sort(np.concatenate([kept_normal, to_normal])),
        final_attack=np.sort(np.concatenate([kept_attack, to_attack])),
        scores=scores,
        flipped_to_normal=np.sort(to_normal),
        flipped_to_attack=np.sort(to_attack),
    )


@dataclass
class TrainedArtifacts:
    mscnn: MscnnAutoencoder
    lstm: LstmAutoencoder
    threshold: Threshold
    mscnn_history: list[float]
    lstm_history: list[float]
    timings: dict[str, float]
    train_normal_count: int


@dataclass
class PipelineResult:
    verdicts: list[DetectionVerdict]
    artifacts: TrainedArtifacts
    timings: dict[str, float]
    stage2: Stage2Result


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    start = time.perf_counter()
    try:
        yield
    except ConfigError:
        raise
    except PipelineError as exc:
        if exc.stage is None:
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0]}",) if exc.args else (f"[{name}]",)
        raise
    except Exception as exc:
        raise PipelineError(str(exc), stage=name) from exc
    finally:
        timings[name] = time.perf_counter() - start


def map_extents(feature_count: int) -> tuple[int, int]:
    grid = to_feature_map(np.zeros(feature_count)).grid
    return grid.shape


def train_models(train_records: list[FeatureRecord], config: RunConfig) -> TrainedArtifacts:
    """Normal-only training of both autoencoders plus the threshold."""
    timings: dict[str, float] = {}
    with _stage("filter-normal", timings):
        normals = filter_normal(train_records)
        if not normals:
            raise DataError("training set contains no normal records")
    with _stage("train-mscnn", timings):
        maps = feature_map_stack(normals)
        nx, ny = maps.shape[2:]
        mscnn_cfg = MscnnConfig(
            nx=nx, ny=ny,
            filters_per_branch=config.mscnn.filters_per_branch,
            latent_dim=config.mscnn.latent_dim,
            pool_window=config.mscnn.pool_window,
            pool_stride=config.mscnn.pool_stride,
        )
        mscnn = MscnnAutoencoder(mscnn_cfg, seed=config.seed)
        mscnn_history = mscnn.train(maps, config.mscnn_training)
    with _stage("train-lstm", timings):
        latents = mscnn.encode(maps)
        lstm_cfg = LstmAeConfig(
            latent_dim=config.mscnn.latent_dim,
            window=config.lstm.window,
            code_dim=config.lstm.code_dim,
            hidden_size=config.lstm.hidden_size,
            stride=config.lstm.stride,
            error_mode=config.lstm.error_mode,
        )
        lstm = LstmAutoencoder(lstm_cfg, seed=config.seed + 1)
        train_seqs = make_sequences(latents, lstm_cfg.window, lstm_cfg.stride)
        lstm_history = lstm.train(train_seqs, config.lstm_training)
    with _stage("threshold", timings):
        # Threshold statistics use stride-1 sequences: one error per record.
        scoring_seqs = make_sequences(latents, lstm_cfg.window, stride=1)
        train_errors = lstm.record_errors(scoring_seqs)
        threshold = compute_threshold(train_errors, k=config.detector.k)
    return TrainedArtifacts(
        mscnn=mscnn, lstm=lstm, threshold=threshold,
        mscnn_history=mscnn_history, lstm_history=lstm_history,
        timings=timings, train_normal_count=len(normals),
    )


def detect(artifacts: TrainedArtifacts, test_records: list[FeatureRecord],
           config: RunConfig) -> PipelineResult:
    """Score the test set and run both detection stages."""
    if not test_records:
        raise DataError("test set is empty")
    timings: dict[str, float] = {}
    with _stage("encode-test", timings):
        maps = feature_map_stack(test_records)
        latents = artifacts.mscnn.encode(maps)
        # Detection always walks stride-1 windows: one verdict per record.
        seqs = make_sequences(latents, artifacts.lstm.config.window, stride=1)
        errors = artifacts.lstm.record_errors(seqs)
    with _stage("stage1", timings):
        normal_idx, attack_idx = stage1_classify(errors, artifacts.threshold)
    with _stage("stage2", timings):
        features = build_stage2_features(errors, latents, config.detector.feature_space)
        stage2 = stage2_correct(features, normal_idx, attack_idx,
                                config.detector, seed=config.seed)
    with _stage("verdicts", timings):
        stage1_labels = np.full(errors.size, NORMAL, dtype=object)
        stage1_labels[attack_idx] = ATTACK
        stage2_labels = stage1_labels.copy()
        stage2_labels[stage2.flipped_to_normal] = NORMAL
        stage2_labels[stage2.flipped_to_attack] = ATTACK
        verdicts = []
        for i in range(errors.size):
            s = stage2.scores[i]
            verdicts.append(DetectionVerdict(
                record_index=i,
                reconstruction_error=float(errors[i]),
                stage1_label=str(stage1_labels[i]),
                stage2_label=str(stage2_labels[i]),
                iforest_score=None if np.isnan(s) else float(s),
                ground_truth=test_records[i].label,
            ))
    return PipelineResult(verdicts=verdicts, artifacts=artifacts, timings=timings, stage2=stage2)


def run_pipeline(train_records: list[FeatureRecord], test_records: list[FeatureRecord],
                 config: RunConfig) -> PipelineResult:
    """Train both models, then score and correct the test set."""
    artifacts = train_models(train_records, config)
    result = detect(artifacts, test_records, config)
    result.timings = {**artifacts.timings, **result.timings}
    return result
