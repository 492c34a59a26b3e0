"""Exception classes shared across the engine."""


class VoxelinkError(Exception):
    """Base class for all engine errors."""


# volume I/O

class EmptyStack(VoxelinkError):
    """No input files were given."""


class DimensionMismatch(VoxelinkError):
    def __init__(self, message, slice_index=None):
        super().__init__(message)
        self.slice_index = slice_index


class UnsupportedPixelFormat(VoxelinkError):
    """Color, float or otherwise unsupported TIFF pixel format."""


class DecodeError(VoxelinkError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class InvalidWindow(VoxelinkError):
    """Window width must be positive."""


class IndexOutOfRange(VoxelinkError):
    pass


class IoError(VoxelinkError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


# annotation

class DegenerateRay(VoxelinkError):
    """Ray direction is parallel to the canvas plane (within 1e-9)."""


class ShapeMismatch(VoxelinkError):
    pass


# surface extraction

class Cancelled(VoxelinkError):
    def __init__(self, message, progress=None):
        super().__init__(message)
        self.progress = progress


# mesh optimization

class DegenerateTriangle(VoxelinkError):
    pass


# service

class UnknownSession(VoxelinkError):
    pass


class SchemaError(VoxelinkError):
    pass


class NoMeshYet(VoxelinkError):
    def __init__(self, message, job_id=None):
        super().__init__(message)
        self.job_id = job_id
