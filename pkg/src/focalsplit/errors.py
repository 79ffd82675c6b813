"""Exception hierarchy.

Every error raised by the library derives from :class:`FocalSplitError`.
:class:`InputError` subclasses cover malformed inputs (CLI exit code 3);
:class:`NumericalError` subclasses cover geometric or numerical failure
(CLI exit code 4).
"""


class FocalSplitError(Exception):
    """Base class for all library errors."""


class InputError(FocalSplitError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(FocalSplitError, ArithmeticError):
    """A computation reached an invalid geometric or numerical state."""


class NonPositiveDepth(NumericalError):
    """A point or pose lies at or behind the camera plane."""


class ZeroAxis(InputError):
    """Rotation axis has zero length but a non-zero angle was requested."""


class NonPositiveK(InputError):
    """The pinned depth constant ``k`` must be strictly positive."""


class AlreadyReannotated(InputError):
    """Re-annotating a scene twice would silently rescale ``f`` again."""


class NotReannotated(InputError):
    """The operation requires a scene expressed at a pinned depth ``k``."""


class EmptyMesh(InputError):
    """Mesh has no vertices (or no triangles where rendering needs them)."""


MeshEmpty = EmptyMesh


class VertexBehindCamera(NumericalError):
    """A mesh vertex has camera-space depth at or below the epsilon."""


class DimensionMismatch(InputError):
    """Two images that must share dimensions do not."""


class NonFiniteUpdate(NumericalError):
    """An alignment provider produced NaN or infinite update components."""


class DegenerateBBox(InputError):
    """Bounding box has zero width or height."""


class DegenerateNormalEquations(NumericalError):
    """Gauss-Newton normal matrix is rank deficient."""


class InsufficientCorrespondences(InputError):
    """Fewer correspondences than the solver needs."""


class FlatLossRegion(NumericalError):
    """Every finite-difference probe returned the same loss."""


class SamplingExhausted(NumericalError):
    """No valid scene could be drawn within the retry budget."""


class KMismatch(InputError):
    """Estimate and ground truth were pinned to different ``k``."""


class ParseError(InputError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)


class IndexOutOfRange(ParseError):
    """An OBJ face references a vertex that does not exist."""


class RefinementError(FocalSplitError):
    """Wraps a failure raised inside the refinement loop.

    ``iteration`` is the loop index at which the failure happened and
    ``__cause__`` holds the original exception.
    """

    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
