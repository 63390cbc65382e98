"""Command-line entry point: preprocess, train, detect, evaluate.

Every command takes --config/--out/--seed/--threads/--force and validates
the full configuration before touching the filesystem. Outputs are written
atomically; reruns over existing preprocess/train artifacts require --force.
Exit codes: 0 success, 1 invalid config or usage, 2 runtime failure,
3 artifact/config hash mismatch.

numpy is imported only after --threads has pinned the BLAS pool sizes, so
--threads 1 gives bit-exact reproducibility.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from .errors import ConfigError, HashMismatchError, PipelineError
from .ioutil import atomic_write_text, dump_json, read_json, write_json

PREPROCESSOR_TAG = "anomaly-pipeline-preprocessor/1"

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

logger = logging.getLogger("anomaly_pipeline.cli")


def _configure_logging():
    levels = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }
    name = os.environ.get("ANOMALY_PIPELINE_LOG", "warning").strip().lower()
    logging.basicConfig(
        level=levels.get(name, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run-config JSON")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--threads", type=int,
                        help="cap numeric worker threads; 1 is bit-exact")
    common.add_argument("--force", action="store_true",
                        help="overwrite existing preprocess/train artifacts")
    parser = argparse.ArgumentParser(
        prog="anomaly-pipeline",
        description="Two-stage unsupervised network-intrusion detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common],
                   help="encode raw CSVs into scaled feature matrices")
    sub.add_parser("train", parents=[common],
                   help="train both autoencoders and the error threshold")
    sub.add_parser("detect", parents=[common],
                   help="score the test set and write verdicts")
    sub.add_parser("evaluate", parents=[common],
                   help="compute metrics and report files from verdicts")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging()
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(f"--threads must be >= 1, got {args.threads}")
            for var in _THREAD_VARS:
                os.environ[var] = str(args.threads)
        handler = {
            "preprocess": cmd_preprocess,
            "train": cmd_train,
            "detect": cmd_detect,
            "evaluate": cmd_evaluate,
        }[args.command]
        handler(args)
        return 0
    except ConfigError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HashMismatchError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001 - unexpected failures map to exit 2
        import traceback

        traceback.print_exc()
        return 2


def _load_run_config(args):
    from .config import RunConfig

    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out_dir = args.out or config.out_dir
    if not out_dir:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    return config, Path(out_dir)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _dataset_hash(config) -> str:
    """Hash of the dataset section plus the resolved schema document."""
    schema = config.dataset.load_schema()
    doc = {
        "dataset": asdict(config.dataset),
        "schema": {
            "name": schema.name,
            "column_names": list(schema.column_names),
            "column_kinds": list(schema.column_kinds),
            "label_mapping": schema.label_mapping,
            "has_header": schema.has_header,
        },
    }
    return hashlib.sha256(dump_json(doc).encode("utf-8")).hexdigest()


def _update_manifest(out: Path, config, section: str, payload: dict) -> None:
    path = out / "manifest.json"
    chash = config.config_hash()
    doc = {}
    if path.is_file():
        doc = read_json(path)
        if doc.get("config_hash") != chash:
            # A config change starts a fresh run; stale sections would mislead.
            doc = {}
    doc["config_hash"] = chash
    doc.setdefault("commands", {})[section] = payload
    write_json(path, doc)


def _refuse_existing(paths: list[Path], force: bool, what: str) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise ConfigError(
            f"{what} already exist(s): {', '.join(existing)}; pass --force to overwrite"
        )


def _feature_header(schema) -> list[str]:
    return ["label"] + [schema.column_names[i] for i in schema.feature_columns]


def cmd_preprocess(args) -> None:
    config, out = _load_run_config(args)
    config.validate_paths()
    from . import ingest

    schema = config.dataset.load_schema()
    pre_dir = out / "preprocessed"
    targets = [pre_dir / "train.csv", pre_dir / "test.csv", pre_dir / "preprocessor.json"]
    _refuse_existing(targets, args.force, "preprocessed artifact")

    started = time.perf_counter()
    train = ingest.load_csv(config.dataset.train_csv, schema)
    test = ingest.load_csv(config.dataset.test_csv, schema)
    encoder = ingest.fit_categorical(train, schema)
    scaler = ingest.fit_scaler(train, encoder)
    ingest.encode_and_scale(train, encoder, scaler)
    ingest.encode_and_scale(test, encoder, scaler)
    train_normals = sum(1 for r in train if r.label == ingest.NORMAL)
    logger.info("preprocess: %d train rows (%d normal), %d test rows",
                len(train), train_normals, len(test))

    header = _feature_header(schema)
    for name, records in (("train.csv", train), ("test.csv", test)):
        _write_csv(pre_dir / name, header,
                   ([rec.label] + [float(v) for v in rec.encoded] for rec in records))
    write_json(pre_dir / "preprocessor.json", {
        "format": PREPROCESSOR_TAG,
        "schema": schema.name,
        "dataset_hash": _dataset_hash(config),
        "codes": {str(col): mapping for col, mapping in encoder.codes.items()},
        "mins": scaler.mins.tolist(),
        "maxs": scaler.maxs.tolist(),
        "train_rows": len(train),
        "train_normal_rows": train_normals,
        "test_rows": len(test),
    })
    _update_manifest(out, config, "preprocess", {
        "train_rows": len(train),
        "train_normal_rows": train_normals,
        "test_rows": len(test),
        "seconds": time.perf_counter() - started,
    })


def _read_encoded(path: Path):
    """Encoded-matrix CSV back into labeled feature records."""
    from .ingest import FeatureRecord
    import numpy as np

    if not path.is_file():
        raise ConfigError(f"missing preprocessed file {path}; run preprocess first")
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            label = row[0] or None
            encoded = np.array([float(v) for v in row[1:]], dtype=np.float64)
            records.append(FeatureRecord(raw=row, encoded=encoded, label=label))
    return records


def _load_preprocessor(out: Path, config) -> dict:
    path = out / "preprocessed" / "preprocessor.json"
    if not path.is_file():
        raise ConfigError(f"missing {path}; run preprocess first")
    doc = read_json(path)
    if doc.get("format") != PREPROCESSOR_TAG:
        raise ConfigError(f"{path} is not a preprocessor artifact")
    if config.dataset is not None and doc.get("dataset_hash") != _dataset_hash(config):
        raise HashMismatchError(
            "preprocessed artifacts were built from a different dataset/schema; "
            "rerun preprocess with --force"
        )
    return doc


def cmd_train(args) -> None:
    config, out = _load_run_config(args)
    pre = _load_preprocessor(out, config)
    models_dir = out / "models"
    targets = [models_dir / "mscnn.json", models_dir / "lstm.json",
               models_dir / "training.json"]
    _refuse_existing(targets, args.force, "model artifact")

    from .detector import train_models
    from .nn.serialize import document_digest

    train_records = _read_encoded(out / "preprocessed" / "train.csv")
    artifacts = train_models(train_records, config)
    artifacts.mscnn.save(models_dir / "mscnn.json")
    artifacts.lstm.save(models_dir / "lstm.json")
    digests = {
        "mscnn": document_digest(artifacts.mscnn.to_document()),
        "lstm": document_digest(artifacts.lstm.to_document()),
    }
    write_json(models_dir / "training.json", {
        "config_hash": config.config_hash(),
        "threshold": artifacts.threshold.to_dict(),
        "mscnn_history": artifacts.mscnn_history,
        "lstm_history": artifacts.lstm_history,
        "timings": artifacts.timings,
        "train_normal_rows": artifacts.train_normal_count,
    })
    logger.info("train: %d normal rows, theta=%.6g",
                artifacts.train_normal_count, artifacts.threshold.theta)
    _update_manifest(out, config, "train", {
        "train_rows": pre["train_rows"],
        "train_normal_rows": artifacts.train_normal_count,
        "model_digests": digests,
        "threshold": artifacts.threshold.to_dict(),
        "timings": artifacts.timings,
    })


def _load_artifacts(out: Path, config):
    from .conv_autoencoder import MscnnAutoencoder
    from .detector import Threshold, TrainedArtifacts
    from .lstm_autoencoder import LstmAutoencoder

    training_path = out / "models" / "training.json"
    if not training_path.is_file():
        raise ConfigError(f"missing {training_path}; run train first")
    doc = read_json(training_path)
    if doc.get("config_hash") != config.config_hash():
        raise HashMismatchError(
            "trained models were produced under a different config/seed; retrain "
            "or rerun with the matching config"
        )
    return TrainedArtifacts(
        mscnn=MscnnAutoencoder.load(out / "models" / "mscnn.json"),
        lstm=LstmAutoencoder.load(out / "models" / "lstm.json"),
        threshold=Threshold.from_dict(doc["threshold"]),
        mscnn_history=list(doc["mscnn_history"]),
        lstm_history=list(doc["lstm_history"]),
        timings={},
        train_normal_count=int(doc["train_normal_rows"]),
    )


def cmd_detect(args) -> None:
    config, out = _load_run_config(args)
    artifacts = _load_artifacts(out, config)
    from .detector import detect

    test_records = _read_encoded(out / "preprocessed" / "test.csv")
    result = detect(artifacts, test_records, config)
    _write_csv(out / "verdicts.csv",
               ["record_index", "epsilon", "stage1", "stage2", "iforest_score",
                "ground_truth"],
               ([v.record_index, v.reconstruction_error, v.stage1_label,
                 v.stage2_label, v.iforest_score, v.ground_truth]
                for v in result.verdicts))
    stage1_attacks = sum(1 for v in result.verdicts if v.stage1_label == "attack")
    stage2_attacks = sum(1 for v in result.verdicts if v.stage2_label == "attack")
    write_json(out / "detection.json", {
        "config_hash": config.config_hash(),
        "test_rows": len(test_records),
        "stage1_attacks": stage1_attacks,
        "stage2_attacks": stage2_attacks,
        "timings": result.timings,
    })
    logger.info("detect: %d rows, stage1 attacks %d, stage2 attacks %d",
                len(test_records), stage1_attacks, stage2_attacks)
    _update_manifest(out, config, "detect", {
        "test_rows": len(test_records),
        "stage1_attacks": stage1_attacks,
        "stage2_attacks": stage2_attacks,
        "timings": result.timings,
    })


def _read_verdicts(path: Path) -> list[dict]:
    if not path.is_file():
        raise ConfigError(f"missing {path}; run detect first")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append({
                "record_index": int(row[0]),
                "epsilon": float(row[1]),
                "stage1": row[2],
                "stage2": row[3],
                "iforest_score": float(row[4]) if row[4] else None,
                "ground_truth": row[5] or None,
            })
    return rows


def cmd_evaluate(args) -> None:
    config, out = _load_run_config(args)
    detection_path = out / "detection.json"
    if not detection_path.is_file():
        raise ConfigError(f"missing {detection_path}; run detect first")
    if read_json(detection_path).get("config_hash") != config.config_hash():
        raise HashMismatchError(
            "verdicts were produced under a different config/seed; rerun detect"
        )
    from .errors import DataError
    from .metrics import averaged_metrics, confusion, per_class_matrices, roc_auc, scalar_metrics

    verdicts = _read_verdicts(out / "verdicts.csv")
    unlabeled = [v["record_index"] for v in verdicts if v["ground_truth"] is None]
    if unlabeled:
        raise DataError(
            f"{len(unlabeled)} verdict row(s) lack ground truth (first: record "
            f"{unlabeled[0]}); evaluation needs labeled test data"
        )
    truths = [v["ground_truth"] for v in verdicts]
    epsilons = [v["epsilon"] for v in verdicts]

    stages = {}
    matrices = {}
    for stage in ("stage1", "stage2"):
        preds = [v[stage] for v in verdicts]
        cm = confusion(preds, truths)
        matrices[stage] = cm
        stages[stage] = {
            **scalar_metrics(cm),
            "averaged": averaged_metrics(per_class_matrices(preds, truths)),
        }
    curve = roc_auc(epsilons, truths)
    write_json(out / "metrics.json", {"roc_auc": curve.auc, **stages})
    _write_csv(out / "roc.csv", ["fpr", "tpr", "threshold"],
               ([float(fpr), float(tpr), float(t)]
                for (fpr, tpr), t in zip(curve.points, curve.thresholds)))
    _write_csv(out / "scores.csv",
               ["record_index", "epsilon", "ground_truth", "stage1", "stage2"],
               ([v["record_index"], v["epsilon"], v["ground_truth"], v["stage1"],
                 v["stage2"]] for v in verdicts))
    _write_csv(out / "confusion.csv", ["stage", "tp", "fp", "fn", "tn"],
               ([stage, cm.tp, cm.fp, cm.fn, cm.tn]
                for stage, cm in matrices.items()))
    logger.info("evaluate: auc=%.6g stage1 acc=%.6g stage2 acc=%.6g",
                curve.auc, stages["stage1"]["accuracy"], stages["stage2"]["accuracy"])
    _update_manifest(out, config, "evaluate", {
        "roc_auc": curve.auc,
        "stage1": {k: stages["stage1"][k] for k in ("accuracy", "precision", "recall", "f1")},
        "stage2": {k: stages["stage2"][k] for k in ("accuracy", "precision", "recall", "f1")},
    })


if __name__ == "__main__":
    sys.exit(main())
