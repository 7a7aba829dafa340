"""Exception hierarchy shared across the toolkit.

Each class carries the CLI exit code and a short machine-parsable category
so command wrappers can triage failures without string matching.
"""


class LedError(Exception):
    exit_code = 1
    category = "error"


class ValidationError(LedError):
    """Input violates a data-model invariant (bad ids, bad boxes, bad schema)."""

    exit_code = 3
    category = "validation"


class ParseError(ValidationError):
    """Input file is not parseable at all."""

    category = "parse"


class ConfigError(ValidationError):
    """Configuration value out of range or inconsistent."""

    category = "config"


class InputError(LedError):
    """I/O level failure: missing path, unreadable file, failed write."""

    exit_code = 4
    category = "io"


class InternalError(LedError):
    """An internal invariant was breached; indicates a bug, not bad input."""

    exit_code = 5
    category = "internal"
