"""
Exception hierarchy for the transport simulators
"""


class SimulationError(Exception):
    """Base exception for simulation errors"""
    pass


class NumericalError(SimulationError):
    """Raised when a solver fails for numerical reasons"""
    pass


class ChemicalPotentialError(NumericalError):
    """Raised when the chemical potential cannot be bracketed"""
    pass


class UnsupportedInteractionError(SimulationError):
    """Raised when U != 0 is passed to a method valid only for U = 0"""
    pass


class HermiticityError(NumericalError):
    """Raised when a density matrix drifts away from Hermiticity"""
    pass


class SingularSystemError(NumericalError):
    """Raised when a stationary problem has no unique solution"""
    pass


class QuadratureError(NumericalError):
    """Raised when a reservoir integral does not converge"""
    pass


class HistoryUnderrunError(NumericalError):
    """Raised when the memory integral needs history that was not stored"""
    pass


class SignalTooShortError(SimulationError):
    """Raised when a recorded series is too short for the requested analysis"""
    pass


class DivergenceError(NumericalError):
    """Raised when a stochastic trajectory blows up"""

    def __init__(self, message: str, params: dict | None = None):
        super().__init__(message)
        self.params = params or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.params:
            return base
        details = ", ".join(f"{key}={value}" for key, value in self.params.items())
        return f"{base} ({details})"
