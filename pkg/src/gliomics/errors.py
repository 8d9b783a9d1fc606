"""Exception hierarchy shared across the pipeline."""


class GliomicsError(Exception):
    """Base class for all errors raised by this package."""


# --- file I/O -------------------------------------------------------------

class MissingFile(GliomicsError, FileNotFoundError):
    pass


class BadMagic(GliomicsError):
    """File is not a NIfTI-1 image (bad magic string or header size)."""


class UnsupportedDatatype(GliomicsError):
    """On-disk datatype we refuse to interpret (RGB, complex, 4D, ...)."""


class IoFailure(GliomicsError, OSError):
    pass


class LabelOutOfRange(GliomicsError):
    """A segmentation voxel holds a value outside {0..5}."""

    def __init__(self, value, index):
        self.value = value
        self.index = tuple(int(i) for i in index)
        super().__init__(f"label value {value} at voxel {self.index} not in 0..5")


# --- geometry / resampling ------------------------------------------------

class ModeMismatch(GliomicsError):
    """Linear interpolation requested for a label map."""


class GeometryMismatch(GliomicsError):
    pass


# --- registration -----------------------------------------------------------

class InsufficientOverlap(GliomicsError):
    pass


class NoImprovement(GliomicsError):
    """Search radius collapsed before any mutation could be evaluated."""


# --- features ---------------------------------------------------------------

class NegativeProbability(GliomicsError):
    pass


class DegenerateRegion(GliomicsError):
    """Shape analysis asked for an empty component."""


# --- classifiers ------------------------------------------------------------

class EmptyMatrix(GliomicsError):
    pass


class SingleClass(GliomicsError):
    pass


class NoConvergence(GliomicsError):
    pass


class DivergedLoss(GliomicsError):
    """Training loss became NaN/Inf."""


# --- evaluation / statistics ------------------------------------------------

class ClassTooSmall(GliomicsError):
    pass


class LengthMismatch(GliomicsError):
    pass


class TooFewGroups(GliomicsError):
    pass


# --- phantom ----------------------------------------------------------------

class InfeasibleRatios(GliomicsError):
    """Requested component ratios cannot be nested inside the grid."""
