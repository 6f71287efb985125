"""Exception hierarchy shared across the package."""


class StorageAssumptionError(ValueError):
    """A storage specification violates one of its consistency conditions."""

    inequality = ""

    def __init__(self, message):
        super().__init__(f"{message} (requires {self.inequality})")


class BoundOrderError(StorageAssumptionError):
    inequality = "s_min <= s_max and u_min <= 0 <= u_max, coefficients in (0, 1]"


class UnrecoverableMinimumError(StorageAssumptionError):
    inequality = "lambda*s_min + u_max >= s_min"


class UnrecoverableMaximumError(StorageAssumptionError):
    inequality = "lambda*s_max + u_min <= s_max"


class RampRangeError(StorageAssumptionError):
    inequality = "u_max - u_min < s_max - s_min"


class StorageStepError(ValueError):
    pass


class RampViolation(StorageStepError):
    pass


class LevelBoundViolation(StorageStepError):
    pass


class NetworkError(ValueError):
    pass


class DisconnectedNetworkError(NetworkError):
    pass


class InvalidAdmittanceError(NetworkError):
    pass


class SelfLoopError(NetworkError):
    pass


class NonConvexCostError(ValueError):
    pass


class InfeasibleParametersError(ValueError):
    """The (Gamma, W) region is empty for a storage/cost pair."""


class LPError(RuntimeError):
    pass


class LPInfeasible(LPError):
    pass


class LPUnbounded(LPError):
    pass


class LPIterationLimit(LPError):
    pass


class MarkovChainError(ValueError):
    pass


class SimulationAbort(RuntimeError):
    """Raised when a run breaches a certified invariant.

    Carries the period index and a dump of the state at the time of failure.
    """

    def __init__(self, message, period, state):
        super().__init__(f"period {period}: {message}; state={state}")
        self.period = period
        self.state = state


class ScenarioError(ValueError):
    pass


class ScenarioParseError(ScenarioError):
    pass


class ScenarioSchemaError(ScenarioError):
    pass


class ScenarioSemanticError(ScenarioError):
    pass
