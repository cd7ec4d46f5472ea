"""Exception and warning types raised across the package."""


class OgeError(Exception):
    """Base class for all package errors."""


class DataError(OgeError):
    """Input data cannot be processed (CLI exit code 2)."""


# hdr_io
class FormatError(DataError):
    pass


class CorruptDataError(DataError):
    pass


class UnsupportedOrientationError(FormatError):
    pass


class InvalidDimensionError(DataError, ValueError):
    pass


# photometry / glare_metrics
class GeometryError(DataError, ValueError):
    pass


class EmptyRegionError(DataError, ValueError):
    pass


class DetectionError(DataError):
    pass


# features / learning
class ShapeError(DataError, ValueError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class SplitError(DataError, ValueError):
    pass


class SchemaError(DataError):
    pass


class RocError(DataError, ValueError):
    pass


class VariationUndefinedError(DataError, ZeroDivisionError):
    pass


class UnknownMetricError(DataError, KeyError):
    pass


# synthesis / cli
class GenerationError(DataError):
    pass


class EmptyRequestError(DataError, ValueError):
    pass


class EmptyInputError(DataError):
    pass


class DegenerateDataWarning(UserWarning):
    """Training data holds a single class; a constant model is fitted instead."""
