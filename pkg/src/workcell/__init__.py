"""workcell: end-user management of multi-device robotic workplaces.

Scenes compose typed device instances; projects are validated acyclic
visual programs over them; the build step freezes both into self-contained
executable packages; a WebSocket server hosts the shared editing session.
"""

from .errors import WorkcellError
from .geometry import Orientation, Pose, Position, compose, invert, transform

__version__ = "0.1.0"

__all__ = [
    "WorkcellError",
    "Orientation",
    "Pose",
    "Position",
    "compose",
    "invert",
    "transform",
    "__version__",
]
