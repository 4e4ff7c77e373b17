"""Root exception for the package.

Each module defines its own error class deriving from ``Pc2Error`` so that
callers (the CLI in particular) can catch everything raised by the library
with a single ``except`` clause.
"""


class Pc2Error(Exception):
    """Base class for all errors raised by pc2."""
    pass
