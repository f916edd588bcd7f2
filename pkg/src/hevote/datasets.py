"""Access to the logit batches shipped with the package."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .ensemble import LogitBatch, load_logits


def bundled_path(name: str) -> Path:
    path = Path(str(resources.files("hevote") / "data" / name))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled data file {name!r}")
    return path


def bundled_labels() -> dict[str, list[int]]:
    """Plaintext oracle labels for every bundled batch, keyed by file name."""
    return json.loads(bundled_path("labels.json").read_text())


def load_bundled(name: str) -> LogitBatch:
    return load_logits(bundled_path(name))


def synthetic_names() -> list[str]:
    return sorted(k for k in bundled_labels() if k.startswith("synthetic_"))
