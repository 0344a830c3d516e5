"""Versioned model checkpoints.

A checkpoint is a single JSON document holding the model config, the fitted
scaler block, training metadata, and every named parameter tensor with its
shape and row-major values. Floats are stored as C99 hex literals so the
round trip is bit-exact. Files are written atomically (temp file + rename),
so a crash never leaves a partial checkpoint behind.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..features import ScalerState
from .model import ModelConfig, SequenceModel, TrainingMeta

FORMAT_NAME = "flockdetect-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(model: SequenceModel, path: str | Path) -> None:
    path = Path(path)
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "meta": model.meta.to_dict(),
        "params": {
            name: {
                "shape": list(tensor.shape),
                "data": [float(v).hex() for v in tensor.ravel()],
            }
            for name, tensor in sorted(model.params.items())
        },
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> SequenceModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')} unsupported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    try:
        config = ModelConfig.from_dict(doc["config"])
        scaler = None if doc["scaler"] is None else ScalerState.from_dict(doc["scaler"])
        meta = TrainingMeta.from_dict(doc["meta"])
        params = {}
        for name, entry in doc["params"].items():
            values = np.array([float.fromhex(v) for v in entry["data"]], dtype=np.float64)
            params[name] = values.reshape(entry["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return SequenceModel(config=config, params=params, scaler=scaler, meta=meta)
