"""Exception hierarchy shared by all modules."""


class DRBSGTError(Exception):
    pass


class ArgumentError(DRBSGTError, ValueError):
    pass


class TopologyError(DRBSGTError):
    pass


class RuleInapplicableError(DRBSGTError):
    pass


class InvariantError(DRBSGTError):
    pass


class NumericalError(DRBSGTError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ConstructionError(DRBSGTError):
    pass


class PartitionError(DRBSGTError):
    pass


class ParseError(DRBSGTError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class DataError(DRBSGTError):
    pass


class ConvergenceError(DRBSGTError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(DRBSGTError):
    def __init__(self, message, k=None, agent=None):
        super().__init__(message)
        self.k = k
        self.agent = agent


class DegenerateFitError(DRBSGTError):
    pass


class InapplicableError(DRBSGTError):
    pass


class ConfigError(DRBSGTError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
