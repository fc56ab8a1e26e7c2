"""Exception types shared across the library and mapped to CLI exit codes."""


class CambError(Exception):
    """Base class for all library errors."""


class ShapeError(CambError):
    """Operands have incompatible or unexpected shapes."""


class NumericError(CambError):
    """A computation produced non-finite values or diverged."""


class ContractError(CambError):
    """A documented precondition was violated by the caller."""


class MissingProbeError(CambError):
    """Classification requested on a contrastive bundle without a trained probe."""


class DegenerateBatchError(CambError):
    """A batch on which the requested loss is undefined (e.g. no positives at all)."""


class TensorFormatError(CambError):
    """A tensor/checkpoint file is truncated, corrupt, or has a bad magic/version."""


class ConfigError(CambError):
    """An experiment config is malformed or inconsistent."""


class MissingArtifactError(CambError):
    """A pipeline stage was invoked before its predecessor produced its outputs."""
