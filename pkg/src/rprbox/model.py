"""Geometry of a planar 3-RPR manipulator.

The base frame is centred at A1 with the x-axis through A2, so
``A1 = (0, 0)``, ``A2 = (a2x, 0)`` and ``A3 = (a3x, a3y)``.  The moving
platform is the triangle B1 B2 B3 with edges ``d1 = |B1B2|``,
``d2 = |B2B3|`` and ``d3 = |B1B3|``.

Config files are line-oriented ``key = value`` text; ``#`` starts a comment::

    # reference manipulator
    a2x = 15.91
    a3x = 0
    a3y = 10
    d1 = 17.04
    d2 = 16.54
    d3 = 20.84

``beta`` is the interior angle at B1, measured counterclockwise from B1B2
to B1B3 (B3 lies to the left of the directed edge B1 -> B2).  The mirrored
platform is a different manipulator with a different joint-space surface.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

REQUIRED_KEYS = ("a2x", "a3x", "a3y", "d1", "d2", "d3")
ACOS_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for malformed configs and geometries violating an invariant."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DegeneratePlatformError(GeometryError):
    pass


def platform_angle(d1: float, d2: float, d3: float) -> float:
    """Interior angle at B1 from the three platform edge lengths.

    Law of cosines on the triangle B1 B2 B3.  Collinear platforms (weak
    triangle inequality) return 0 or pi.

    Raises:
        DegeneratePlatformError: if the cosine leaves [-1, 1] by more than
            ``ACOS_TOL``, i.e. no such triangle exists.
    """
    if not (d1 > 0 and d3 > 0):
        raise DegeneratePlatformError("non-positive edge", "d1" if not d1 > 0 else "d3")
    cos_beta = (d1 * d1 + d3 * d3 - d2 * d2) / (2.0 * d1 * d3)
    if abs(cos_beta) > 1.0 + ACOS_TOL:
        raise DegeneratePlatformError("triangle inequality violated", "d2")
    return math.acos(min(1.0, max(-1.0, cos_beta)))


@dataclass(frozen=True)
class ManipulatorGeometry:
    a2x: float
    a3x: float
    a3y: float
    d1: float
    d2: float
    d3: float
    beta: float = field(init=False)
    degenerate: bool = field(init=False)

    def __post_init__(self) -> None:
        for name in REQUIRED_KEYS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise GeometryError("non-finite value", name)
            object.__setattr__(self, name, float(value))
        for name in ("d1", "d2", "d3"):
            if getattr(self, name) <= 0:
                raise GeometryError("non-positive edge", name)
        if self.a2x <= 0:
            raise GeometryError("a2x must be positive", "a2x")
        object.__setattr__(self, "beta", platform_angle(self.d1, self.d2, self.d3))
        d1, d2, d3 = self.d1, self.d2, self.d3
        strict = d1 < d2 + d3 and d2 < d1 + d3 and d3 < d1 + d2
        object.__setattr__(self, "degenerate", not strict)

    @property
    def base_points(self) -> np.ndarray:
        """Base joint centres A1, A2, A3 as a (3, 2) array."""
        return np.array([[0.0, 0.0], [self.a2x, 0.0], [self.a3x, self.a3y]])

    @property
    def scale(self) -> float:
        return max(self.a2x, abs(self.a3x), abs(self.a3y))

    def to_text(self) -> str:
        """Canonical config text; ``load_geometry(g.to_text()) == g``."""
        return "".join(f"{k} = {getattr(self, k)!r}\n" for k in REQUIRED_KEYS)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


REFERENCE_GEOMETRY = ManipulatorGeometry(
    a2x=15.91, a3x=0.0, a3y=10.0, d1=17.04, d2=16.54, d3=20.84
)


def load_geometry(config_text: str) -> ManipulatorGeometry:
    """Parse ``key = value`` text into a validated geometry.

    Unknown keys are rejected so typos do not silently fall back to defaults.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GeometryError(f"line {lineno}: expected 'key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in REQUIRED_KEYS:
            raise GeometryError(f"line {lineno}: unknown key", key)
        if key in values:
            raise GeometryError(f"line {lineno}: duplicate key", key)
        try:
            values[key] = float(value)
        except ValueError:
            raise GeometryError(f"line {lineno}: cannot parse number {value!r}", key) from None
    for key in REQUIRED_KEYS:
        if key not in values:
            raise GeometryError("missing key", key)
    return ManipulatorGeometry(**values)


def read_geometry(path) -> ManipulatorGeometry:
    with open(path, encoding="utf-8") as fh:
        return load_geometry(fh.read())
