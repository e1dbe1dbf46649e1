"""Exception types shared across the package."""


class DirHilbertError(Exception):
    """Base class for all package errors."""


class ConfigError(DirHilbertError):
    """Invalid user configuration (CLI exit code 2)."""


class ResourceGuardError(DirHilbertError):
    """A memory or enumeration budget would be exceeded (CLI exit code 3)."""


class GeometryError(DirHilbertError):
    """Direction set validation or sector construction failed."""


class GenericityError(GeometryError):
    """No base point with well separated hyperplane heights was found."""


class ConstructionError(DirHilbertError):
    """The inductive construction failed at a specific vertex."""

    def __init__(self, vertex: int, constraint: str, message: str):
        self.vertex = vertex
        self.constraint = constraint
        super().__init__(f"vertex {vertex}: [{constraint}] {message}")


class IntegrityError(DirHilbertError):
    """An internal consistency check failed; usually floating point trouble."""
