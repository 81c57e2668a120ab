"""Collaboration server: one shared session, entity locks, event fan-out."""

from .session import Session
from .ws import CollabServer

__all__ = ["Session", "CollabServer"]
