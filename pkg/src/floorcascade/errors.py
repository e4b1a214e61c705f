"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` which the CLI echoes
in its JSON error payload.
"""


class FloorplanError(Exception):
    code = "error"
    exit_code = 2


class EmptyMask(FloorplanError):
    code = "EmptyMask"


class OutOfCanvas(FloorplanError):
    code = "OutOfCanvas"


class EmptyInput(FloorplanError):
    code = "EmptyInput"


class BadDims(FloorplanError):
    code = "BadDims"


class TooManyDoors(FloorplanError):
    code = "TooManyDoors"


class TooFewQueries(FloorplanError):
    code = "TooFewQueries"


class NoMatches(FloorplanError):
    code = "NoMatches"


class NoRooms(FloorplanError):
    code = "NoRooms"


class BadConfig(FloorplanError):
    code = "BadConfig"


class InvariantViolation(FloorplanError):
    code = "InvariantViolation"
    exit_code = 3
