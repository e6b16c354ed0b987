"""Small filesystem helpers."""

from __future__ import annotations

import os
import tempfile


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def thread_cap(default: int = 1) -> int:
    """Worker count from ``MAC_FORGE_THREADS``, at least 1."""
    value = os.environ.get("MAC_FORGE_THREADS")
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        return default
