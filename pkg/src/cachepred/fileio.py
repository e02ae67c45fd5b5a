"""Small file helpers shared by the CLI and the timing table writer."""

from __future__ import annotations

import os
from pathlib import Path


def atomic_write_text(path, text: str) -> None:
    """Write whole-file atomically: a reader never sees a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_replace(tmp_path, path) -> None:
    os.replace(tmp_path, path)
