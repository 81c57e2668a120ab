"""Error type shared by all workcell modules.

Every failure that crosses a module or wire boundary carries a stable
string code (e.g. ``UNREACHABLE``, ``LOCK_REQUIRED``).  The collaboration
server maps these codes verbatim into RPC error responses, and the CLI
maps them to exit codes.
"""

from __future__ import annotations


class WorkcellError(Exception):
    """Failure with a machine-readable code and a human-readable message."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code
        self.message = message or code

    def __repr__(self) -> str:
        return f"WorkcellError({self.code!r}, {self.message!r})"


def error(code: str, message: str = "") -> WorkcellError:
    return WorkcellError(code, message)
