"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Malformed or missing input (bad file, bad parameter)."""


class FormatError(InputError):
    """A file could not be parsed.

    ``location`` carries a human readable position such as ``line 12``.
    """

    def __init__(self, path, location, message):
        self.path = str(path)
        self.location = location
        super().__init__(f"{path}: {location}: {message}")


class ConsistencyError(ValueError):
    """Inputs parse individually but disagree with each other (CRS, shapes)."""


class MissingPredictionError(InputError):
    """Some retained cameras have no prediction image."""

    def __init__(self, camera_ids):
        self.camera_ids = sorted(camera_ids)
        super().__init__(
            "missing prediction images for cameras: " + ", ".join(self.camera_ids)
        )
