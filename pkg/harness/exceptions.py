class ConfigError(ValueError):
    """An experiment config failed validation; raised before any episode runs."""


class OutputError(OSError):
    """Writing a result file failed."""

    def __init__(self, path, message: str):
        super().__init__(f"{message} ({path})")
        self.path = str(path)
