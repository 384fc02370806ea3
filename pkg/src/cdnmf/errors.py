"""Shared exception types."""


class ParseError(ValueError):
    """A malformed line in one of the text file formats (raw log, interaction
    CSV, events CSV, model file, config file).

    Carries the 1-based line number and, when known, the file path so callers
    can report the exact location.
    """

    def __init__(self, message: str, line_no: int | None = None, path: str | None = None):
        self.message = message
        self.line_no = line_no
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line_no is not None:
            where.append(f"line {line_no}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TrainingDivergedError(RuntimeError):
    """A model parameter became NaN/inf during SGD. Names the epoch."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training diverged: non-finite parameter after epoch {epoch}")
