"""Exception hierarchy shared across the toolkit."""


class LumiforgeError(Exception):
    """Base class for all toolkit errors (runtime failures, exit code 2 in the CLI)."""


class ManifestError(LumiforgeError):
    """Light-field manifest is missing, malformed, or references bad images."""


class GeometryError(LumiforgeError):
    """Degenerate optical or projective configuration (e.g. focus at infinity, d=0 projection)."""


class ShapeError(LumiforgeError):
    """Array shapes violate an operation's contract."""


class CheckpointError(LumiforgeError):
    """Checkpoint file is corrupt or does not match the requested network layout."""


class TrainingDiverged(LumiforgeError):
    """Loss became non-finite; carries the path of the state dump when one was written."""

    def __init__(self, message: str, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
