"""Embedded single-node persistence.

One data directory holds everything: knowledge bases as canonical DSL text
files with one file per version, users and cases as JSON documents. Every
write goes through an atomic same-directory rename, so a crash after any
completed request leaves only whole files behind.

Layout::

    <data_dir>/users.json
    <data_dir>/kbs/<kb_id>/meta.json
    <data_dir>/kbs/<kb_id>/v<N>.kb
    <data_dir>/cases/<case_id>.json
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..dsl import parse_kb, serialize_kb
from ..kb import KnowledgeBase

_SAFE_ID = re.compile(r"^[a-zA-Z][a-zA-Z0-9_-]*$")


class StorageError(Exception):
    pass


class UnknownKb(StorageError):
    pass


class VersionConflict(StorageError):
    """An optimistic version check failed; reload and retry."""


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, doc: Any) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True).encode("utf-8"))


def check_id(candidate: str, what: str) -> str:
    if not _SAFE_ID.match(candidate):
        raise StorageError(f"{what} {candidate!r} is not a valid identifier")
    return candidate


@dataclass(frozen=True)
class KbInfo:
    id: str
    latest_version: int
    versions: tuple[int, ...]


class Store:
    """File-backed store for users, versioned knowledge bases, and cases.

    All mutating operations serialize on one lock; reads of committed state
    go straight to disk and always see whole files.
    """

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "kbs").mkdir(exist_ok=True)
        (self.root / "cases").mkdir(exist_ok=True)
        self._lock = threading.RLock()

    # -- users ---------------------------------------------------------------

    @property
    def _users_path(self) -> Path:
        return self.root / "users.json"

    def load_users(self) -> list[dict[str, Any]]:
        if not self._users_path.exists():
            return []
        return json.loads(self._users_path.read_text("utf-8"))

    def save_users(self, users: list[dict[str, Any]]) -> None:
        with self._lock:
            _atomic_write_json(self._users_path, users)

    # -- knowledge bases -------------------------------------------------------

    def _kb_dir(self, kb_id: str) -> Path:
        return self.root / "kbs" / check_id(kb_id, "knowledge base id")

    def _kb_meta(self, kb_id: str) -> dict[str, Any]:
        meta_path = self._kb_dir(kb_id) / "meta.json"
        if not meta_path.exists():
            raise UnknownKb(kb_id)
        return json.loads(meta_path.read_text("utf-8"))

    def list_kbs(self) -> list[KbInfo]:
        out = []
        for entry in sorted((self.root / "kbs").iterdir()):
            if not entry.is_dir() or not (entry / "meta.json").exists():
                continue
            meta = json.loads((entry / "meta.json").read_text("utf-8"))
            versions = tuple(int(v["version"]) for v in meta["versions"])
            out.append(KbInfo(entry.name, max(versions), versions))
        return out

    def kb_info(self, kb_id: str) -> KbInfo:
        meta = self._kb_meta(kb_id)
        versions = tuple(int(v["version"]) for v in meta["versions"])
        if not versions:
            raise UnknownKb(kb_id)
        return KbInfo(kb_id, max(versions), versions)

    def load_kb(self, kb_id: str, version: int | None = None) -> KnowledgeBase:
        info = self.kb_info(kb_id)
        v = info.latest_version if version is None else version
        path = self._kb_dir(kb_id) / f"v{v}.kb"
        if v not in info.versions or not path.exists():
            raise UnknownKb(f"{kb_id}@{v}")
        kb = parse_kb(path.read_text("utf-8"))
        return KnowledgeBase(
            id=kb_id,
            version=v,
            global_declarations=kb.global_declarations,
            meta_rules=kb.meta_rules,
            rulebases=kb.rulebases,
        )

    def store_kb_version(
        self,
        kb_id: str,
        kb: KnowledgeBase,
        editor: str,
        timestamp: str,
        expected_version: int | None = None,
    ) -> int:
        """Append a new version; optionally guarded by an optimistic check."""
        with self._lock:
            kb_dir = self._kb_dir(kb_id)
            kb_dir.mkdir(parents=True, exist_ok=True)
            meta_path = kb_dir / "meta.json"
            if meta_path.exists():
                meta = json.loads(meta_path.read_text("utf-8"))
            else:
                meta = {"id": kb_id, "versions": []}
            latest = max((int(v["version"]) for v in meta["versions"]), default=0)
            if expected_version is not None and latest != expected_version:
                raise VersionConflict(
                    f"knowledge base '{kb_id}' is at version {latest}, "
                    f"not {expected_version}"
                )
            new_version = latest + 1
            _atomic_write(kb_dir / f"v{new_version}.kb", serialize_kb(kb).encode("utf-8"))
            meta["versions"].append(
                {"version": new_version, "editor": editor, "timestamp": timestamp}
            )
            _atomic_write_json(meta_path, meta)
            return new_version

    def delete_kb(self, kb_id: str) -> None:
        with self._lock:
            kb_dir = self._kb_dir(kb_id)
            if not (kb_dir / "meta.json").exists():
                raise UnknownKb(kb_id)
            for child in kb_dir.iterdir():
                child.unlink()
            kb_dir.rmdir()

    # -- cases -----------------------------------------------------------------

    def store_case(self, record: dict[str, Any]) -> None:
        with self._lock:
            case_id = check_id(record["id"], "case id")
            _atomic_write_json(self.root / "cases" / f"{case_id}.json", record)

    def list_cases(self) -> list[dict[str, Any]]:
        out = []
        for path in sorted((self.root / "cases").glob("*.json")):
            out.append(json.loads(path.read_text("utf-8")))
        out.sort(key=lambda c: (c.get("timestamp", ""), c["id"]))
        return out

    def load_case(self, case_id: str) -> dict[str, Any] | None:
        path = self.root / "cases" / f"{check_id(case_id, 'case id')}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))
