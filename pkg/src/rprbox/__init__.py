"""Joint-space singularity surfaces and singularity-free boxes for planar 3-RPR manipulators."""

__version__ = "0.1.0"

from rprbox.model import REFERENCE_GEOMETRY, ManipulatorGeometry, load_geometry, platform_angle  # noqa: E402

__all__ = [
    "REFERENCE_GEOMETRY",
    "ManipulatorGeometry",
    "load_geometry",
    "platform_angle",
    "__version__",
]
