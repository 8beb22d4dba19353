"""Exceptions shared across the package."""


class CorpusFormatError(ValueError):
    """A corpus file is malformed or violates a record invariant."""


class ConfigError(ValueError):
    """A weight config or experiment spec file is invalid."""


class ContractError(ValueError):
    """A caller violated an operation precondition (bad move, unknown id)."""


class EmptyResultError(RuntimeError):
    """A query produced no candidates, so there is nothing to resolve."""
