"""
Bose transport package: a tight-binding chain between two thermal ring reservoirs,
solved exactly, by Langevin ensembles and by Born/Markov master equations
"""

from .errors import NumericalError, SimulationError
from .model_core import ChainSpec, ReservoirSpec, SystemSpec

__version__ = '0.1.0'
__all__ = ['ChainSpec', 'ReservoirSpec', 'SystemSpec', 'SimulationError', 'NumericalError']
