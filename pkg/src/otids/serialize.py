"""Canonical JSON helpers.

Every persisted artefact (scaler/projection state, trained models,
evaluation reports) goes through dumps() so identical state always
serialises to identical bytes: sorted keys, two-space indent, shortest
round-trip float notation, trailing newline.
"""

from __future__ import annotations

import json

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_path(obj, path) -> int:
    payload = dumps(obj).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)


def loads(text: str):
    return json.loads(text)


def load_path(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def require_kind(doc: dict, kind: str, version: int) -> None:
    """Reject documents of the wrong kind or an unknown schema version."""
    got_kind = doc.get("kind")
    got_version = doc.get("schema_version")
    if got_kind != kind:
        raise ValueError(f"expected a {kind!r} document, found {got_kind!r}")
    if got_version != version:
        raise ValueError(
            f"{kind}: unsupported schema_version {got_version!r} (want {version})"
        )
