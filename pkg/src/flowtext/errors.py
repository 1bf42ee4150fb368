"""Exception hierarchy shared by every flowtext module."""


class FlowTextError(Exception):
    """Base class for all errors raised by flowtext."""


class PointAtInfinityError(FlowTextError):
    """A projective mapping sent a point to (or near) the line at infinity."""


class DegenerateError(FlowTextError):
    """Singular matrix or rank-deficient correspondence configuration."""


class InsufficientDataError(FlowTextError):
    """Fewer correspondences than the estimator needs."""


class FitFailedError(FlowTextError):
    """Robust fitting found no consensus set large enough."""


class OutOfBoundsError(FlowTextError):
    """A query point lies outside the sampled field."""


class EmptyInputError(FlowTextError):
    """A statistic was requested over an empty set."""


class InputContractError(FlowTextError):
    """Inputs violate a shape, count or layout contract."""


class FormatError(FlowTextError):
    """A file does not follow its declared binary/text layout."""


class ContentError(FlowTextError):
    """A file decodes but carries invalid values (NaN, non-positive depth...)."""


class PlacementFailedError(FlowTextError):
    """No region of the frame can host the requested text."""


class RenderFailedError(FlowTextError):
    """Not a single text could be placed on the seed frame."""


class UnsupportedCharacterError(FlowTextError):
    """The active glyph source has no glyph for a character."""
