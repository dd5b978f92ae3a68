"""Passwords and bearer tokens for the consultation service.

Passwords are stored as salted PBKDF2-HMAC-SHA256 digests, never plain.
Tokens are opaque 128-bit random strings held in memory with an expiry;
restarting the process deliberately invalidates every session token.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import time
from dataclasses import dataclass

_PBKDF2_ITERATIONS = 60_000

ROLES = ("admin", "knowledge_engineer", "practitioner")


def hash_password(password: str, salt: str | None = None) -> tuple[str, str]:
    """Return (salt_hex, digest_hex) for a password."""
    salt_hex = salt if salt is not None else secrets.token_hex(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), bytes.fromhex(salt_hex), _PBKDF2_ITERATIONS
    )
    return salt_hex, digest.hex()


def verify_password(password: str, salt_hex: str, digest_hex: str) -> bool:
    _, candidate = hash_password(password, salt_hex)
    return hmac.compare_digest(candidate, digest_hex)


@dataclass(frozen=True)
class TokenInfo:
    token: str
    username: str
    expires_at: float


class TokenRegistry:
    """In-memory bearer tokens with expiry; thread-safe."""

    def __init__(self, ttl_seconds: float = 24 * 3600.0):
        self.ttl = ttl_seconds
        self._tokens: dict[str, TokenInfo] = {}
        self._lock = threading.Lock()

    def issue(self, username: str) -> TokenInfo:
        info = TokenInfo(secrets.token_hex(16), username, time.time() + self.ttl)
        with self._lock:
            self._tokens[info.token] = info
        return info

    def lookup(self, token: str) -> str | None:
        """Username for a live token, or None if unknown or expired."""
        with self._lock:
            info = self._tokens.get(token)
            if info is None:
                return None
            if info.expires_at <= time.time():
                del self._tokens[token]
                return None
            return info.username

    def revoke_user(self, username: str) -> None:
        with self._lock:
            stale = [t for t, info in self._tokens.items() if info.username == username]
            for t in stale:
                del self._tokens[t]
