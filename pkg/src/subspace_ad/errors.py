"""Exception hierarchy shared across the package.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map exceptions to stable machine-readable error codes.
"""


class SubspaceADError(Exception):
    """Base class for all errors raised by this package."""

    #: stable identifier used in CLI error JSON; defaults to the class name
    @property
    def code(self) -> str:
        return type(self).__name__


# --- generic input validation ---

class EmptyInput(SubspaceADError):
    pass


class DimensionMismatch(SubspaceADError):
    pass


class ShapeMismatch(SubspaceADError):
    pass


class NonFiniteValue(SubspaceADError):
    pass


# --- linear algebra ---

class NotSymmetric(SubspaceADError):
    pass


class NoConvergence(SubspaceADError):
    pass


# --- file formats ---

class IoFailure(SubspaceADError):
    pass


class BadMagic(SubspaceADError):
    pass


class UnsupportedVersion(SubspaceADError):
    pass


class Truncated(SubspaceADError):
    pass


class DimensionOverflow(SubspaceADError):
    pass


class InvalidHeader(SubspaceADError):
    pass


class ManifestError(SubspaceADError):
    pass


class ModelNotFound(SubspaceADError):
    pass


# --- model fitting ---

class DegenerateData(SubspaceADError):
    pass


class AllZeroSpectrum(SubspaceADError):
    pass


# --- scoring ---

class EmptyMap(SubspaceADError):
    pass


class InvalidTarget(SubspaceADError):
    pass


# --- metrics ---

class OneClassOnly(SubspaceADError):
    pass


class NoPositives(SubspaceADError):
    pass


class NoRegions(SubspaceADError):
    pass


# --- synthetic data ---

class InvalidSpec(SubspaceADError):
    pass
