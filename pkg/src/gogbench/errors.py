"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class WorkbenchError(Exception):
    exit_code = 6


class ParseError(WorkbenchError):
    exit_code = 5


class SchemaError(ParseError):
    pass


class ValidationFailed(WorkbenchError):
    exit_code = 3

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class BudgetExceeded(WorkbenchError):
    exit_code = 4


class UnknownGenerator(WorkbenchError, ValueError):
    pass


class BackendMismatch(WorkbenchError, TypeError):
    pass


class IdentityBase(WorkbenchError, ValueError):
    pass


class MalformedWord(ParseError, ValueError):
    pass


class NotInBall(WorkbenchError, KeyError):
    pass


class UnknownTreeLocation(WorkbenchError, KeyError):
    pass


class EmptySelection(WorkbenchError, ValueError):
    pass


class EmptyEdgeSpace(EmptySelection):
    pass


class NotTypeS(WorkbenchError, ValueError):
    pass


class OutOfBall(WorkbenchError, ValueError):
    pass


class EmptyLine(EmptySelection):
    pass


class DisconnectedBase(WorkbenchError, ValueError):
    pass


class Disconnected(WorkbenchError, ValueError):
    pass
