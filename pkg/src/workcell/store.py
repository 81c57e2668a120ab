"""Persistent storage: one JSON file per entity under ``store/{kind}/``.

Writes are serialized and crash-consistent (write to a temp file in the
same directory, fsync, then rename), so a killed process leaves either the
old payload or the new one, never a torn file.  Optimistic concurrency via
the ``modified`` timestamp: a put with a stale expectation is refused.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
import threading
import zipfile
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

from .errors import WorkcellError
from .model import canonical_json

KINDS = ("scenes", "projects", "object_types", "models", "packages")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class Store:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _path(self, kind: str, uid: str) -> Path:
        if kind not in KINDS:
            raise WorkcellError("NOT_FOUND", f"unknown kind {kind!r}")
        if not uid or "/" in uid or uid.startswith("."):
            raise WorkcellError("NOT_FOUND", f"bad uid {uid!r}")
        return self.root / kind / f"{uid}.json"

    def put(self, kind: str, payload: dict, expected_modified: Optional[str] = None) -> str:
        """Write an entity; returns the new ``modified`` timestamp.

        ``expected_modified`` enables optimistic concurrency: when given, it
        must equal the currently stored timestamp.
        """
        uid = payload.get("uid")
        path = self._path(kind, uid)
        with self._write_lock:
            current = None
            if path.exists():
                current = json.loads(path.read_text()).get("modified")
            if expected_modified is not None and expected_modified != current:
                raise WorkcellError(
                    "CONFLICT", f"{kind}/{uid} was modified (stored {current!r})"
                )
            stamp = _now()
            if current is not None and stamp <= current:
                # Clock did not advance past the stored stamp; nudge forward.
                bumped = datetime.fromisoformat(current) + timedelta(microseconds=1)
                stamp = bumped.isoformat(timespec="microseconds")
            data = dict(payload)
            data["modified"] = stamp
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write(canonical_json(data))
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            return stamp

    def get(self, kind: str, uid: str) -> dict:
        path = self._path(kind, uid)
        if not path.exists():
            raise WorkcellError("NOT_FOUND", f"{kind}/{uid} not found")
        return json.loads(path.read_text())

    def exists(self, kind: str, uid: str) -> bool:
        try:
            return self._path(kind, uid).exists()
        except WorkcellError:
            return False

    def list(self, kind: str) -> list:
        """Entity uids of one kind, sorted."""
        directory = self.root / kind
        if kind not in KINDS:
            raise WorkcellError("NOT_FOUND", f"unknown kind {kind!r}")
        if not directory.is_dir():
            return []
        return sorted(p.stem for p in directory.glob("*.json"))

    def delete(self, kind: str, uid: str) -> None:
        path = self._path(kind, uid)
        if not path.exists():
            raise WorkcellError("NOT_FOUND", f"{kind}/{uid} not found")
        blocker = self._referenced_by(kind, uid)
        if blocker:
            raise WorkcellError("REFERENCED", f"{kind}/{uid} is referenced by {blocker}")
        with self._write_lock:
            path.unlink()

    def _referenced_by(self, kind: str, uid: str) -> Optional[str]:
        if kind == "scenes":
            for project_uid in self.list("projects"):
                if self.get("projects", project_uid).get("scene") == uid:
                    return f"projects/{project_uid}"
        if kind == "object_types":
            for scene_uid in self.list("scenes"):
                scene = self.get("scenes", scene_uid)
                if any(o.get("object_type") == uid for o in scene.get("objects", [])):
                    return f"scenes/{scene_uid}"
        return None

    # -- workplace archive ----------------------------------------------------

    def export_archive(self, path) -> Path:
        """Zip the whole store (all kinds) into one workplace archive."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for kind in KINDS:
                for uid in self.list(kind):
                    zf.writestr(f"{kind}/{uid}.json", (self.root / kind / f"{uid}.json").read_text())
        return path

    def import_archive(self, path, replace: bool = False) -> int:
        """Unpack a workplace archive into this store; returns entity count."""
        count = 0
        with zipfile.ZipFile(Path(path)) as zf:
            for name in sorted(zf.namelist()):
                kind, _, filename = name.partition("/")
                if kind not in KINDS or not filename.endswith(".json"):
                    continue
                target = self.root / kind / filename
                if target.exists() and not replace:
                    continue
                target.parent.mkdir(parents=True, exist_ok=True)
                with self._write_lock:
                    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-", suffix=".json")
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(zf.read(name))
                        fh.flush()
                        os.fsync(fh.fileno())
                    os.replace(tmp, target)
                count += 1
        return count

    def wipe(self) -> None:
        for kind in KINDS:
            directory = self.root / kind
            if directory.is_dir():
                shutil.rmtree(directory)
