"""Versioned JSON serialization for model parameters.

A model document stores every parameter tensor as a shape plus a flat
row-major value list, the architecture name, and the config that produced
it, so a saved model can be reloaded without re-deriving any geometry.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..ioutil import dump_json, read_json, write_json

FORMAT_TAG = "anomaly-pipeline-model/1"


def params_to_document(architecture: str, config: dict, params: dict[str, np.ndarray]) -> dict:
    """Build the JSON-ready document for a parameter dict.

    Args:
        architecture: short name identifying the model class.
        config: JSON-safe construction settings for the model.
        params: mapping of parameter name to float array.
    """
    tensors = {}
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} contains non-finite values")
        tensors[name] = {
            "shape": list(arr.shape),
            "values": arr.ravel(order="C").tolist(),
        }
    return {
        "format": FORMAT_TAG,
        "architecture": architecture,
        "config": config,
        "params": tensors,
    }


def document_to_params(doc: dict, expected_architecture: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of params_to_document. Returns (config, params)."""
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ConfigError(
            f"unrecognized model document (expected format {FORMAT_TAG!r}, "
            f"got {doc.get('format') if isinstance(doc, dict) else type(doc).__name__!r})"
        )
    arch = doc.get("architecture")
    if expected_architecture is not None and arch != expected_architecture:
        raise ConfigError(f"model document is {arch!r}, expected {expected_architecture!r}")
    params = {}
    for name, tensor in doc.get("params", {}).items():
        shape = tuple(tensor["shape"])
        values = np.asarray(tensor["values"], dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if values.size != expected:
            raise ConfigError(f"parameter {name!r}: {values.size} values for shape {shape}")
        params[name] = values.reshape(shape, order="C")
    return doc.get("config", {}), params


def save_model(path: str | Path, architecture: str, config: dict, params: dict[str, np.ndarray]):
    write_json(path, params_to_document(architecture, config, params))


def load_model(path: str | Path, expected_architecture: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    return document_to_params(read_json(path), expected_architecture)


def document_digest(doc: dict) -> str:
    """sha256 over the canonical JSON encoding; used in run manifests."""
    return hashlib.sha256(dump_json(doc).encode("utf-8")).hexdigest()
