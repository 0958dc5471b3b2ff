"""Exception hierarchy shared by the solver, simulator and estimators."""


class BenPorathError(Exception):
    """Base class for all package errors."""


# numerics
class NoSignChange(BenPorathError, ValueError):
    pass


class MaxIterations(BenPorathError, RuntimeError):
    pass


class AllInfeasible(BenPorathError, ValueError):
    pass


class NonFiniteIntegrand(BenPorathError, ArithmeticError):
    pass


# structural model
class DomainError(BenPorathError, ValueError):
    pass


class NonFinite(BenPorathError, ArithmeticError):
    pass


class NegativeConsumption(BenPorathError, ArithmeticError):
    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class NoInteriorSolution(BenPorathError, RuntimeError):
    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis


class AgentSolveError(BenPorathError, RuntimeError):
    def __init__(self, agent_id, cause):
        super().__init__(f"agent {agent_id}: {cause}")
        self.agent_id = agent_id
        self.cause = cause


# estimation
class EmptyData(BenPorathError, ValueError):
    pass


class RankDeficient(BenPorathError, ValueError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; collinear columns: {list(columns)}")
        self.columns = list(columns)


class MissingCell(BenPorathError, ValueError):
    pass


class ZeroVariance(BenPorathError, ValueError):
    def __init__(self, columns):
        super().__init__(f"zero variance in columns: {list(columns)}")
        self.columns = list(columns)


# life histories
class EmptyPanel(BenPorathError, ValueError):
    pass


class GapInAges(BenPorathError, ValueError):
    pass


class OutOfRange(BenPorathError, ValueError):
    pass


class PanelFormatError(BenPorathError, ValueError):
    def __init__(self, errors):
        head = "; ".join(errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        super().__init__(f"{len(errors)} malformed rows: {head}{more}")
        self.errors = list(errors)


class ConfigError(BenPorathError, ValueError):
    pass
