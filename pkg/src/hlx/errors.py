"""Exception types shared across the library."""


class InputError(ValueError):
    """Malformed or inconsistent caller input."""


class EvaluationError(RuntimeError):
    """A model produced non-finite or otherwise unusable values."""


class ResolutionError(RuntimeError):
    """A stored table does not resolve the requested quantity; extend it."""


class LocalityError(RuntimeError):
    """A flow time exceeds the locality bound for the requested radius."""


class LevelSetError(RuntimeError):
    """A sampled level set is empty or degenerate."""


class GeometryWarningError(RuntimeError):
    """A geometric postcondition failed beyond tolerance."""
