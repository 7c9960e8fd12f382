"""Exception types raised across the package."""


class DenoiserError(Exception):
    """Base class for every error this package raises on purpose."""


class EmptyDataset(DenoiserError, ValueError):
    pass


class DimensionMismatch(DenoiserError, ValueError):
    pass


class DegenerateSimplex(DenoiserError, ValueError):
    pass


class NotRays(DenoiserError, ValueError):
    pass


class RaysNotObtuse(DenoiserError, ValueError):
    def __init__(self, pair, cosine):
        self.pair = tuple(pair)
        self.cosine = float(cosine)
        super().__init__(f"rays {self.pair} are not obtuse (cosine {self.cosine:.3g})")


class NoConvergence(DenoiserError, RuntimeError):
    def __init__(self, max_iter, best):
        self.max_iter = max_iter
        self.best = best
        super().__init__(f"no convergence after {max_iter} iterations")


class AssumptionViolated(DenoiserError, ValueError):
    """Noise intervals of two neighbouring clean points are not separated."""

    def __init__(self, pair, message=None):
        self.pair = tuple(pair)
        super().__init__(message or f"noise intervals of points {self.pair} are not well separated")


class BallsOverlap(DenoiserError, ValueError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"ball {index} overlaps a neighbouring ball")


class NotObtuse(DenoiserError, ValueError):
    pass


class NotAcute(DenoiserError, ValueError):
    pass


class A1Violated(DenoiserError, ValueError):
    def __init__(self, pair):
        self.pair = tuple(pair)
        super().__init__(f"difference vectors {self.pair} on different chains are not obtuse")


class A2Violated(DenoiserError, ValueError):
    def __init__(self, index):
        self.index = tuple(index)
        super().__init__(f"halfspace nesting fails at ball {self.index}")


class EmptyBatch(DenoiserError, ValueError):
    pass


class DivergedLoss(DenoiserError, RuntimeError):
    def __init__(self, step, trace):
        self.step = step
        self.trace = trace
        super().__init__(f"loss diverged at step {step}")


class ModelShapeUnsupported(DenoiserError, ValueError):
    pass


class UnsupportedDensity(DenoiserError, ValueError):
    pass


class NoSignificantUnits(DenoiserError, ValueError):
    pass


class ConfigParse(DenoiserError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class IllConditioned(DenoiserError, RuntimeWarning):
    """A correlation so close to +-1 that the degenerate formula is used instead."""
