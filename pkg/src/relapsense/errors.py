"""Exception types shared across the pipeline.

Exit-code mapping used by the CLI: UsageError -> 1,
DataContractError -> 2, anything else -> 3.
"""


class UsageError(Exception):
    """Bad invocation: unknown flags, malformed config, missing arguments."""


class DataContractError(Exception):
    """Input data violates a documented schema or stage contract."""
