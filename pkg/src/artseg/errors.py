"""Exception types shared across the package."""


class ArtsegError(Exception):
    """Base class for all library errors."""


# --- file parsing ---------------------------------------------------------

class MalformedHeader(ArtsegError):
    pass


class UnsupportedDatatype(ArtsegError):
    pass


class CompressedInput(ArtsegError):
    pass


class NonBinaryMask(ArtsegError):
    pass


class IoFailure(ArtsegError):
    pass


class LossyDtype(ArtsegError):
    pass


# --- geometry / prompts ---------------------------------------------------

class EmptyMask(ArtsegError):
    pass


class GeometryMismatch(ArtsegError):
    pass


class MissingPrior(ArtsegError):
    pass


class MissingPrompt(ArtsegError):
    pass


# --- registration ---------------------------------------------------------

class EmptyOverlap(ArtsegError):
    pass


class DegenerateInput(ArtsegError):
    pass


# --- metrics --------------------------------------------------------------

class EmptySurface(ArtsegError):
    pass


class UndefinedDistance(ArtsegError):
    pass


# --- gateway --------------------------------------------------------------

class BackendFailure(ArtsegError):
    pass


class ProtocolViolation(ArtsegError):
    pass


class SpawnFailure(ArtsegError):
    pass


class HandshakeTimeout(ArtsegError):
    pass


class VersionMismatch(ArtsegError):
    pass


# --- phantoms / harness ---------------------------------------------------

class TumorOutOfBounds(ArtsegError):
    pass


class ManifestError(ArtsegError):
    pass
