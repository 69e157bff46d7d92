"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class ContractError(ValueError):
    """A caller violated an explicit call contract (bad index, bad mode, ...)."""


class ConfigError(ValueError):
    """A run configuration is structurally or semantically invalid."""


class SamplingError(ValueError):
    """An episode cannot be drawn from the given dataset."""


class EncodingError(ValueError):
    """A class id is not representable in the requested label scheme."""


class EmptyMemoryError(ValueError):
    """Classification was requested against a memory with no occupied slot."""


class CheckpointError(ValueError):
    """A checkpoint file is missing, truncated or inconsistent."""


class DataLoadError(ValueError):
    """A dataset directory does not have the expected layout or content."""
