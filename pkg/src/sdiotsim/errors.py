"""Exception hierarchy shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class TopologyError(SimError):
    pass


class DisconnectedTopology(TopologyError):
    pass


class DuplicateId(TopologyError):
    pass


class NegativeDelay(TopologyError):
    pass


class UnknownId(SimError, KeyError):
    def __str__(self):  # KeyError quotes its argument
        return str(self.args[0]) if self.args else ""


class InvalidAssignment(SimError):
    pass


class UnstableQueue(SimError, ArithmeticError):
    """Arrival rate at or above service rate; the M/M/1 wait is unbounded."""

    def __init__(self, lam, mu, controller=None):
        self.lam = lam
        self.mu = mu
        self.controller = controller
        where = "" if controller is None else f" at controller {controller}"
        super().__init__(f"unstable queue{where}: lambda={lam} >= mu={mu}")


class NoIdleController(SimError):
    pass


class NoLiveControllers(SimError):
    pass


class StaleMessage(SimError):
    pass


class TimeTravel(SimError):
    pass


class EmptySeries(SimError, ValueError):
    pass


class NoElectionInTrace(SimError):
    pass


class ScenarioError(SimError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = "" if line is None else f" (line {line}, column {column})"
        super().__init__(f"{message}{loc}")


class SchemaError(ScenarioError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class UnknownKey(SchemaError):
    def __init__(self, path):
        super().__init__(path, "unknown key")
        self.key = path.rsplit(".", 1)[-1]


class InvariantViolation(SimError):
    pass
