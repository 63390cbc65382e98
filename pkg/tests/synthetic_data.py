"""Correlated-Gaussian traffic generator shared by detector and end-to-end tests.

Normal records draw from a fixed linear mixing of iid Gaussians, so features
carry real correlations; the latent draws are truncated at 2.5 sd so the
training min-max range covers everything the scaler will ever see. Anomalies
are stereotyped (attack_spread shrinks their intrinsic variance) and add a
mean shift along a fixed direction: most sit in a tight far cohort
(strong_shift sd units), a weak_fraction sit closer in (weak_shift). Rows
come out as raw CSV cells so tests exercise the full ingest path.
"""

import csv
from pathlib import Path

import numpy as np

from anomaly_pipeline.ingest import DatasetSchema

PROTO_VALUES = ("icmp", "tcp", "udp")
PROTO_WEIGHTS = (0.05, 0.70, 0.25)
ATTACK_NAMES = ("flood", "probe", "spoof")

_STRUCTURE_SEED = 90210


def traffic_schema(numeric_features: int = 12) -> DatasetSchema:
    columns = [{"name": "proto", "kind": "categorical"}]
    columns += [{"name": f"f{i:02d}", "kind": "numeric"} for i in range(numeric_features)]
    columns += [{"name": "label", "kind": "label"}]
    return DatasetSchema.from_dict({
        "name": "synthetic-traffic",
        "columns": columns,
        "label_mapping": {"normal": "normal", "*": "attack"},
        "has_header": True,
    })


def _structure(numeric_features: int):
    """Fixed mixing matrix, means, scales, and shift direction."""
    rng = np.random.default_rng(_STRUCTURE_SEED)
    d = numeric_features
    mix = np.eye(d) + 0.6 * np.tril(rng.uniform(-1.0, 1.0, size=(d, d)), k=-1)
    mu = rng.uniform(1.0, 3.0, size=d)
    scale = rng.uniform(0.5, 2.0, size=d)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    sd = np.sqrt(np.sum(mix * mix, axis=1)) * scale
    return mix, mu, scale, direction, sd


def generate_traffic(seed: int, normal_count: int, anomaly_count: int = 0,
                     numeric_features: int = 12, strong_shift: float = 7.0,
                     weak_shift: float = 5.0, weak_fraction: float = 0.10,
                     attack_spread: float = 0.35, z_clip: float = 2.5,
                     ) -> tuple[list[list[str]], list[str]]:
    """Raw rows (label cell included) plus their normal/attack truth labels.

    Anomalies are shuffled uniformly into the row order so temporal windows
    see them embedded in normal context.
    """
    rng = np.random.default_rng(seed)
    mix, mu, scale, direction, sd = _structure(numeric_features)
    total = normal_count + anomaly_count
    z = np.clip(rng.standard_normal((total, numeric_features)), -z_clip, z_clip)
    z[normal_count:] *= attack_spread
    values = mu + (z @ mix.T) * scale
    strong = rng.normal(strong_shift, 0.5, size=anomaly_count)
    weak = rng.normal(weak_shift, 0.5, size=anomaly_count)
    magnitudes = np.where(rng.random(anomaly_count) < weak_fraction, weak, strong)
    values[normal_count:] += magnitudes[:, None] * (direction * sd)[None, :]
    labels = [True] * normal_count + [False] * anomaly_count
    order = rng.permutation(total)

    protos = rng.choice(PROTO_VALUES, size=total, p=PROTO_WEIGHTS)
    rows, truth = [], []
    for out_pos, src in enumerate(order):
        is_normal = labels[src]
        raw_label = "normal" if is_normal else ATTACK_NAMES[out_pos % len(ATTACK_NAMES)]
        row = [protos[src]] + [f"{v:.6f}" for v in values[src]] + [raw_label]
        rows.append(row)
        truth.append("normal" if is_normal else "attack")
    return rows, truth


def write_csv(path: str | Path, schema: DatasetSchema, rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if schema.has_header:
            writer.writerow(schema.column_names)
        writer.writerows(rows)
