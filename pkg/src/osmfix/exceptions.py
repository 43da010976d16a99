"""Exception hierarchy shared by every stage."""


class OsmFixError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGeometry(OsmFixError, ValueError):
    pass


class EmptyMask(OsmFixError, ValueError):
    pass


class EmptyWindow(OsmFixError, ValueError):
    pass


class UnimodalHistogram(OsmFixError):
    """The evidence histogram never settled into two modes."""


class FormatError(OsmFixError, ValueError):
    pass


class PackingError(OsmFixError, RuntimeError):
    pass


class InconsistentState(OsmFixError, RuntimeError):
    pass


class NoOverlap(OsmFixError):
    """No predicted footprint overlaps the ground truth."""
