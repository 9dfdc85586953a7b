"""Atomic file output and run manifests."""

from __future__ import annotations

import io
import json
import os
import platform
import tempfile
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__


def _to_jsonable(value):
    if is_dataclass(value) and not isinstance(value, type):
        return _to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(key): _to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def write_text_atomic(path: Path, write: Callable[[io.TextIOBase], None]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as stream:
            write(stream)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_json_atomic(path: Path, payload) -> None:
    text = json.dumps(_to_jsonable(payload), indent=2)
    write_text_atomic(path, lambda stream: stream.write(text + "\n"))


def versions() -> dict[str, str]:
    return {
        "ecm_evidence": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(out_dir: Path, command: str, config, extra: dict | None = None) -> Path:
    payload = {
        "command": command,
        "config": config,
        "versions": versions(),
    }
    if extra:
        payload.update(extra)
    path = out_dir / f"manifest_{command}.json"
    write_json_atomic(path, payload)
    return path
