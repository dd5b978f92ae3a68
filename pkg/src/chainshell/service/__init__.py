"""Networked consultation service: storage, auth, and the HTTP application."""

from .app import create_app
from .storage import Store

__all__ = ["create_app", "Store"]
