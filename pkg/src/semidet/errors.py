"""Exception types raised across the package."""


class SemidetError(Exception):
    pass


class NonEvaluable(SemidetError, ValueError):
    pass


class AssumptionViolated(SemidetError, ValueError):
    def __init__(self, failed):
        self.failed = list(failed)
        names = ", ".join(item.name for item in self.failed)
        super().__init__(f"assumptions violated: {names}")


class UnknownModel(SemidetError, KeyError):
    pass


class BadParameter(SemidetError, ValueError):
    pass


class BlowUp(SemidetError, ArithmeticError):
    pass


class NoConvergence(SemidetError, ArithmeticError):
    def __init__(self, message, last_values=None):
        self.last_values = last_values
        super().__init__(message)


class SingularIntegrand(SemidetError, ArithmeticError):
    pass


class BadEpsilon(SemidetError, ValueError):
    pass


class StepTooLarge(SemidetError, ValueError):
    pass


class OverflowGuard(SemidetError, ArithmeticError):
    pass


class GridTooShort(SemidetError, ValueError):
    def __init__(self, required_y_max, y_max):
        self.required_y_max = required_y_max
        super().__init__(f"rescaled flow grid ends at y_max={y_max:.6g}; need at least {required_y_max:.6g}")


class SingularityHit(SemidetError, ArithmeticError):
    pass


class DomainCap(SemidetError, ArithmeticError):
    pass


class IterationDiverged(SemidetError, ArithmeticError):
    pass


class ScaleDiverges(SemidetError, ArithmeticError):
    pass


class HypothesesFail(SemidetError, ValueError):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(f"hypotheses fail: {verdict}")


class Inconclusive(SemidetError, ArithmeticError):
    pass


class EmptySample(SemidetError, ValueError):
    pass
