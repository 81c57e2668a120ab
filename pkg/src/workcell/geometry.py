"""Rigid-body geometry: positions, unit-quaternion orientations, poses.

These are the spatial currency of the whole system.  All orientations are
unit quaternions stored as (w, x, y, z); q and -q denote the same rotation,
so equality is sign-invariant.  All JSON encodings use snake_case field
names and quaternions as {"w": .., "x": .., "y": .., "z": ..}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import WorkcellError

_NORM_TOL = 1e-9


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise WorkcellError("NUMERIC_ERROR", f"non-finite component: {v!r}")


@dataclass(frozen=True)
class Position:
    """Point or translation in meters."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        _require_finite(self.x, self.y, self.z)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z}

    @classmethod
    def from_dict(cls, data: dict) -> "Position":
        return cls(float(data["x"]), float(data["y"]), float(data["z"]))

    def __add__(self, other: "Position") -> "Position":
        return Position(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Position") -> "Position":
        return Position(self.x - other.x, self.y - other.y, self.z - other.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class Orientation:
    """Unit quaternion (w, x, y, z).  Normalized on construction.

    Equality and hashing are sign-invariant: Orientation(w,x,y,z) equals
    Orientation(-w,-x,-y,-z) because both denote the same rotation.
    """

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        _require_finite(self.w, self.x, self.y, self.z)
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n < _NORM_TOL:
            raise WorkcellError("NUMERIC_ERROR", "zero-norm quaternion")
        if abs(n - 1.0) > _NORM_TOL:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    def _canonical(self) -> tuple:
        # Flip sign so the first non-zero component is positive.
        for c in (self.w, self.x, self.y, self.z):
            if c != 0.0:
                if c < 0.0:
                    return (-self.w, -self.x, -self.y, -self.z)
                break
        return (self.w, self.x, self.y, self.z)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Orientation):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __hash__(self) -> int:
        return hash(self._canonical())

    def negate(self) -> "Orientation":
        return Orientation(-self.w, -self.x, -self.y, -self.z)

    def approx_equal(self, other: "Orientation", tol: float = 1e-9) -> bool:
        """Sign-invariant closeness: |dot| within tol of 1."""
        dot = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
        return abs(abs(dot) - 1.0) <= tol

    def multiply(self, other: "Orientation") -> "Orientation":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Orientation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Orientation":
        return Orientation(self.w, -self.x, -self.y, -self.z)

    def rotate(self, p: Position) -> Position:
        # q * (0, p) * q^-1, expanded to avoid constructing intermediates.
        w, x, y, z = self.w, self.x, self.y, self.z
        px, py, pz = p.x, p.y, p.z
        tx = 2.0 * (y * pz - z * py)
        ty = 2.0 * (z * px - x * pz)
        tz = 2.0 * (x * py - y * px)
        return Position(
            px + w * tx + (y * tz - z * ty),
            py + w * ty + (z * tx - x * tz),
            pz + w * tz + (x * ty - y * tx),
        )

    def yaw(self) -> float:
        """Rotation angle about world z (Z-Y-X Euler yaw)."""
        return math.atan2(
            2.0 * (self.w * self.z + self.x * self.y),
            1.0 - 2.0 * (self.y * self.y + self.z * self.z),
        )

    @classmethod
    def from_yaw(cls, angle: float) -> "Orientation":
        return cls(math.cos(angle / 2.0), 0.0, 0.0, math.sin(angle / 2.0))

    @classmethod
    def from_axis_angle(cls, axis: tuple, angle: float) -> "Orientation":
        ax, ay, az = axis
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n == 0.0:
            raise WorkcellError("NUMERIC_ERROR", "zero rotation axis")
        s = math.sin(angle / 2.0) / n
        return cls(math.cos(angle / 2.0), ax * s, ay * s, az * s)

    def to_dict(self) -> dict:
        return {"w": self.w, "x": self.x, "y": self.y, "z": self.z}

    @classmethod
    def from_dict(cls, data: dict) -> "Orientation":
        return cls(float(data["w"]), float(data["x"]), float(data["y"]), float(data["z"]))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotate by orientation, then translate by position."""

    position: Position = Position()
    orientation: Orientation = Orientation()

    def to_dict(self) -> dict:
        return {"position": self.position.to_dict(), "orientation": self.orientation.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        return cls(Position.from_dict(data["position"]), Orientation.from_dict(data["orientation"]))


IDENTITY_POSE = Pose()


def compose(a: Pose, b: Pose) -> Pose:
    """Transform that applies b first, then a (a ∘ b)."""
    return Pose(
        a.position + a.orientation.rotate(b.position),
        a.orientation.multiply(b.orientation),
    )


def invert(p: Pose) -> Pose:
    inv_q = p.orientation.conjugate()
    t = inv_q.rotate(p.position)
    return Pose(Position(-t.x, -t.y, -t.z), inv_q)


def transform(p: Pose, pt: Position) -> Position:
    """Map a point through the rigid transform p."""
    return p.position + p.orientation.rotate(pt)


def poses_close(a: Pose, b: Pose, pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
    return (a.position - b.position).norm() <= pos_tol and a.orientation.approx_equal(
        b.orientation, rot_tol
    )
