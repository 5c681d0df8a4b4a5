"""Exception hierarchy shared by all modules.

Every error carries a short ``kind`` string used by the CLI when it emits a
machine-readable error document.
"""


class WdnoptError(Exception):
    kind = "internal"


class InputError(WdnoptError):
    kind = "input"


class ParseError(InputError):
    """Malformed network document (bad section, wrong field count, ...)."""

    kind = "parse"

    def __init__(self, message, line=None, section=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.section = section


class ValidationError(InputError):
    """Well-formed document describing an invalid network."""

    kind = "validation"

    def __init__(self, message, entity=None):
        super().__init__(message)
        self.entity = entity


class DanglingReferenceError(ValidationError):
    pass


class DisconnectedNetworkError(ValidationError):
    pass


class DomainError(ValueError, WdnoptError):
    """Argument outside the mathematical domain of a formula."""

    kind = "domain"


class SolverError(WdnoptError):
    kind = "solver"


class ConvergenceError(SolverError):
    """Newton iteration did not reach the residual tolerance."""

    def __init__(self, message, residual_energy=None, residual_mass=None, step=None):
        super().__init__(message)
        self.residual_energy = residual_energy
        self.residual_mass = residual_mass
        self.step = step


class StructuralError(SolverError):
    """Singular reduced system (topology cannot support the requested solve)."""


class InfeasibleError(SolverError):
    """No settings satisfy the constraints; ``report`` names the worst violation."""

    def __init__(self, message, report=None, solution=None):
        super().__init__(message)
        self.report = report or {}
        self.solution = solution
