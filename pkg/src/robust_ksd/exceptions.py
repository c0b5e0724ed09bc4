"""Exception hierarchy shared across the package."""


class RobustKSDError(Exception):
    """Base class for all library errors."""


class DegenerateSample(RobustKSDError, ValueError):
    pass


class SingularPoint(RobustKSDError, ValueError):
    pass


class Unavailable(RobustKSDError, NotImplementedError):
    pass


class Unsupported(RobustKSDError, NotImplementedError):
    pass


class IllConditioned(RobustKSDError, ArithmeticError):
    pass


class NegativeVStat(RobustKSDError, ArithmeticError):
    pass


class TooFewPoints(RobustKSDError, ValueError):
    pass


class EmptyData(RobustKSDError, ValueError):
    pass


class BadGrid(RobustKSDError, ValueError):
    pass


class BadWeights(RobustKSDError, ValueError):
    pass


class ModelMismatch(RobustKSDError, ValueError):
    pass


class DomainError(RobustKSDError, ValueError):
    pass


class RootCountError(RobustKSDError, ArithmeticError):
    pass


class BadSimplex(RobustKSDError, ValueError):
    pass


class BadNu(RobustKSDError, ValueError):
    pass


class SchemaError(RobustKSDError, KeyError):
    """Raised for a malformed experiment config; ``key`` names the offending entry."""

    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or key)

    def __str__(self):
        return self.args[0]


class GramEvaluationError(RobustKSDError, ValueError):
    """Stein kernel evaluation failed at a specific pair of data indices."""

    def __init__(self, i, j, cause):
        self.i, self.j = i, j
        super().__init__(f"Stein kernel evaluation failed at pair ({i}, {j}): {cause}")
