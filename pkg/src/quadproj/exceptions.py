"""Exception hierarchy for quadproj."""


class QuadprojError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(QuadprojError, ValueError):
    pass


class InvalidQuadric(QuadprojError, ValueError):
    """A quadric violates one of the central, non-cylindrical assumptions."""


class AsymmetricMatrix(InvalidQuadric):
    pass


class NonSymmetric(AsymmetricMatrix):
    pass


class SingularMatrix(InvalidQuadric):
    pass


class CenterOnQuadric(InvalidQuadric):
    pass


class EmptyQuadric(InvalidQuadric):
    pass


class PoleEvaluation(QuadprojError, ArithmeticError):
    """The secular function was evaluated at one of its poles."""


class NoConvergence(QuadprojError, ArithmeticError):
    """An iterative root finder ran out of iterations.

    The best iterate seen so far is kept on ``best``.
    """

    def __init__(self, message, best=None, iterations=0):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class NotFound(QuadprojError, ArithmeticError):
    pass


class NoCandidate(QuadprojError, ArithmeticError):
    pass


class ZeroDirection(QuadprojError, ValueError):
    pass


class AtCenter(QuadprojError, ValueError):
    pass


class ZeroGradient(QuadprojError, ValueError):
    pass


class InvalidGamma(QuadprojError, ValueError):
    pass


class GenerationFailed(QuadprojError, RuntimeError):
    pass
