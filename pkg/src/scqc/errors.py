"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid parameters or malformed inputs."""


class InfeasibleError(RuntimeError):
    """A defect set cannot be explained on the given graph."""


class UnmappedAddressError(LookupError):
    """An MMIO access falls outside every configured region."""


class UnconfiguredEntryError(LookupError):
    """A decode-table lookup hit an entry that has not been configured."""


class WindowDecodeError(RuntimeError):
    """An inner decoder failed while decoding a window or seam."""

    def __init__(self, where: str, cause: Exception):
        super().__init__(f"{where}: {cause}")
        self.where = where
        self.cause = cause


class ScheduleError(RuntimeError):
    """Two pulses overlap on one channel."""
