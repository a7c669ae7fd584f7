"""Error taxonomy shared by the library and the command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 input error, 4 internal
invariant violation.
"""


class ToolkitError(Exception):
    """Base class for errors the CLI maps to exit codes."""

    exit_code = 4
    prefix = "E-INTERNAL"


class ConfigError(ToolkitError):
    """Bad configuration: unknown key, out-of-range value, ambiguous rules."""

    exit_code = 2
    prefix = "E-CONFIG"


class InputError(ToolkitError):
    """Bad input data: unreadable files, contract-violating rasters, etc."""

    exit_code = 3
    prefix = "E-INPUT"


class InternalError(ToolkitError):
    """An invariant the toolkit itself guarantees was violated."""

    exit_code = 4
    prefix = "E-INTERNAL"
