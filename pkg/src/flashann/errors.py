"""Exception hierarchy, mapped to distinct CLI exit codes."""


class FlashAnnError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class ConfigError(FlashAnnError):
    """Invalid parameters, invalid config file, inconsistent inputs."""

    exit_code = 2


class FormatError(FlashAnnError):
    """Malformed on-disk data: vector files, index files, version mismatch."""

    exit_code = 3
