"""Exception hierarchy shared across the toolkit.

Input-shaped errors (bad files, bad geometry) and runtime-shaped errors
(backends, protocol) are kept in separate branches so the service layer and
the CLI can map them to HTTP statuses / exit codes uniformly.
"""


class RefTrackError(Exception):
    """Base class for all toolkit errors."""


class InputError(RefTrackError):
    """The caller's data is malformed or missing."""


class RuntimeFailure(RefTrackError):
    """An external dependency (backend, endpoint) failed at run time."""


# geometry / kalman
class DegenerateBox(InputError):
    pass


class DegenerateState(InputError):
    pass


# assignment
class InvalidCost(InputError):
    pass


# tracker
class FrameOrder(InputError):
    pass


# gspo
class MalformedSample(InputError):
    pass


class GroupTooSmall(InputError):
    pass


class InvalidDistribution(InputError):
    pass


# metrics
class SequenceMismatch(InputError):
    pass


class NoData(InputError):
    pass


# dataio
class SequenceLoad(InputError):
    pass


class AlignmentViolation(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class IoError(InputError):
    """Unreadable/unwritable caller-supplied path; an input problem, not a backend one."""


# perception
class EmptyQuery(InputError):
    pass


class BackendError(RuntimeFailure):
    """A detector backend failed for one frame; tracking may continue."""


class RemoteError(BackendError):
    def __init__(self, message: str, retries: int = 0):
        super().__init__(f"{message} (after {retries} retries)" if retries else message)
        self.retries = retries


class ProtocolError(BackendError):
    pass
