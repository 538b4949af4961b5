"""Self-describing JSON checkpoint container shared by every model kind."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    config: dict
    params: dict[str, np.ndarray]
    extra: dict


def save_checkpoint(path, kind: str, config: dict,
                    params: dict[str, np.ndarray], extra: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "params": {
            name: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=np.float64).reshape(-1).tolist()}
            for name, arr in params.items()
        },
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid checkpoint: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("kind", "config", "params"):
        if key not in doc:
            raise DataError(f"{path}: checkpoint missing {key!r} field")
    params = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = arr
    return Checkpoint(kind=doc["kind"], config=doc["config"], params=params,
                      extra=doc.get("extra", {}))
