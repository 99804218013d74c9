"""Exception and warning types raised across the package."""


class HocueError(Exception):
    """Base class; ``kind`` is the short tag used in CLI diagnostics."""

    kind = "error"


class NonOrthonormalInput(HocueError, ValueError):
    kind = "non-orthonormal"


class InsufficientPoints(HocueError):
    kind = "insufficient-points"

    def __init__(self, side: str, count: int, required: int | None = None):
        self.side = side
        self.count = count
        self.required = required
        msg = f"{side} cloud has {count} points"
        if required is not None:
            msg += f" (< {required})"
        super().__init__(msg)


class DegenerateJoints(HocueError):
    kind = "degenerate-joints"


class DegenerateTrajectory(HocueError):
    kind = "degenerate-trajectory"


class EmptyTrajectory(HocueError):
    kind = "empty-trajectory"


class NoCueAvailable(HocueError):
    kind = "no-cue"


class EmptyCloud(HocueError):
    kind = "empty-cloud"


class SchemaError(HocueError, ValueError):
    kind = "schema"

    def __init__(self, message: str, *, path=None, line: int | None = None, field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class RangeError(SchemaError):
    kind = "range"


class ConfigError(HocueError, ValueError):
    kind = "config"


class MissingPair(HocueError):
    kind = "missing-pair"


class AnchorOutOfRange(HocueError):
    kind = "anchor-out-of-range"


class MissingFrame(HocueError, KeyError):
    kind = "missing-frame"

    def __str__(self):
        return str(self.args[0]) if self.args else "missing frame"


class BehindCamera(HocueError):
    kind = "behind-camera"


class TooFewFrames(HocueError):
    kind = "too-few-frames"


class NoCommonFrames(HocueError):
    kind = "no-common-frames"


class DegenerateGeometry(UserWarning):
    """ICP source or target spans fewer than two dimensions."""
