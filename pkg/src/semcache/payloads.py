"""Shared payload store standing in for the cluster's network file system."""
from __future__ import annotations

import os
from pathlib import Path

from .errors import NotFound


class MemoryPayloadStore:
    scheme = "mem://"

    def __init__(self):
        self._blobs: dict[str, bytes] = {}

    def put(self, name: str, data: bytes) -> str:
        uri = self.scheme + name
        self._blobs[uri] = bytes(data)
        return uri

    def get(self, uri: str) -> bytes:
        try:
            return self._blobs[uri]
        except KeyError:
            raise NotFound(f"no payload at {uri}") from None

    def exists(self, uri: str) -> bool:
        return uri in self._blobs

    def delete(self, uri: str) -> bool:
        return self._blobs.pop(uri, None) is not None

    def uris(self) -> set[str]:
        return set(self._blobs)

    def adopt(self, uri: str, data: bytes = b"") -> None:
        """Register a payload that was created outside the store (preloaded corpus)."""
        self._blobs[uri] = bytes(data)


class DirectoryPayloadStore:
    """Blobs as plain files under one root directory; the URI is the file path."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, uri: str) -> Path:
        p = Path(uri)
        return p if p.is_absolute() else self.root / p

    def put(self, name: str, data: bytes) -> str:
        path = self.root / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return str(path)

    def get(self, uri: str) -> bytes:
        try:
            return self._path(uri).read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no payload at {uri}") from None

    def exists(self, uri: str) -> bool:
        return self._path(uri).is_file()

    def delete(self, uri: str) -> bool:
        try:
            self._path(uri).unlink()
            return True
        except FileNotFoundError:
            return False

    def uris(self) -> set[str]:
        return {str(p) for p in self.root.iterdir() if p.is_file() and not p.name.endswith(".tmp")}

    def adopt(self, uri: str, data: bytes = b"") -> None:
        path = self._path(uri)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
