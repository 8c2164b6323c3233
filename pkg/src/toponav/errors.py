"""Exception types shared across the package."""


class MapFormatError(ValueError):
    """Map file could not be parsed; message names the offending line/cell."""


class MapValidationError(ValueError):
    """Grid violates a structural invariant (e.g. open boundary)."""


class DomainError(ValueError):
    """An operation precondition was violated (off-grid point, pose in a wall, ...)."""


class EpisodeError(RuntimeError):
    """Episode is invalid against its map or was driven past termination."""


class GenerationError(RuntimeError):
    """Episode/map sampling could not satisfy its constraints."""


class ContractViolation(RuntimeError):
    """A predictor was called outside its contract (e.g. relative pose on a non-connected pair)."""


class ExplorationExhausted(RuntimeError):
    """No ghost nodes remain and the goal is not localized; caller decides the fallback."""
