"""
Configuration models for experiments and the stored grid results
"""

from datetime import datetime
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from sqlalchemy import Column, DateTime, Float, Integer, JSON, String, Text

from bose_transport.model_core import (
    ChainSpec,
    ReservoirSpec,
    SystemSpec,
    interaction_from_g,
)
from db.base import Base

METHODS = ("exact", "langevin", "born", "markov", "analytic")
GRID_ALIASES = {
    "gamma": ("left.gamma", "right.gamma"),
    "beta": ("left.beta", "right.beta"),
    "M": ("left.M", "right.M"),
    "Jr": ("left.Jr", "right.Jr"),
}


# Custom exceptions
class ConfigError(Exception):
    """Base exception for configuration errors"""
    pass


class ConfigParseError(ConfigError):
    """Raised when a configuration line is malformed"""

    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


class ConfigValidationError(ConfigError):
    """Raised when a configuration value violates a model invariant"""

    def __init__(self, key: str, line: Optional[int], reason: str):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {reason}")
        self.key = key
        self.line = line
        self.reason = reason


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# System parameters
class ChainConfig(_Section):
    L: int
    Js: float = 1.0
    delta: float = 0.0
    U: Optional[float] = None
    g: Optional[float] = None

    @field_validator('L')
    def validate_length(cls, v):
        if v < 2:
            raise ValueError(f'chain.L must be >= 2 (got {v})')
        return v

    @field_validator('Js')
    def validate_hopping(cls, v):
        if v <= 0:
            raise ValueError(f'chain.Js must be > 0 (got {v})')
        return v

    @field_validator('U', 'g')
    def validate_interaction(cls, v):
        if v is not None and v < 0:
            raise ValueError(f'interaction must be >= 0 (got {v})')
        return v

    @model_validator(mode='after')
    def validate_single_interaction(self):
        if self.U is not None and self.g is not None:
            raise ValueError('give either chain.U or chain.g, not both')
        return self


class ReservoirConfig(_Section):
    gamma: float
    beta: float
    nbar: float
    M: int = 200
    Jr: float = 1.0

    @field_validator('M')
    def validate_size(cls, v):
        if v < 2:
            raise ValueError(f'M must be >= 2 (got {v})')
        return v

    @field_validator('gamma', 'beta', 'nbar', 'Jr')
    def validate_positive(cls, v, info):
        if v <= 0:
            raise ValueError(f'{info.field_name} must be > 0 (got {v})')
        return v

    def to_spec(self, side: str) -> ReservoirSpec:
        return ReservoirSpec(gamma=self.gamma, beta=self.beta, n_bar=self.nbar,
                             M=self.M, J_r=self.Jr, side=side)


# Method options
class ExactOptions(_Section):
    dt: Optional[float] = Field(default=None, gt=0)
    t_max: Optional[float] = Field(default=None, gt=0)


class LangevinOptions(_Section):
    dt: float = Field(default=0.01, gt=0)
    n_traj: int = Field(default=200, ge=2)
    t_transient: float = Field(default=200.0, ge=0)
    t_average: float = Field(default=200.0, gt=0)
    vacuum_half: bool = False
    block_size: int = Field(default=64, ge=1)


class BornOptions(_Section):
    dt: Optional[float] = Field(default=None, gt=0)
    t_max: Optional[float] = Field(default=None, gt=0)
    kernel: Literal["discrete", "continuum"] = "discrete"


class SweepOptions(_Section):
    delta_min: float = -3.0
    delta_max: float = 1.0
    n_points: int = Field(default=81, ge=2)
    duration: float = Field(default=2000.0, gt=0)
    n_bins: int = Field(default=80, ge=1)
    mode: Literal["ramp", "stationary"] = "ramp"
    g: List[float] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_range(self):
        if self.delta_max <= self.delta_min:
            raise ValueError('sweep.delta_max must exceed sweep.delta_min')
        return self


class SpectrumOptions(_Section):
    t_record: float = Field(default=2000.0, gt=0)
    n_segments: int = Field(default=8, ge=1)
    sites: List[int] = Field(default_factory=list)


class ExperimentPlan(_Section):
    """What to run on a SystemSpec: the method, its options and the grid axes"""
    method: Literal["exact", "langevin", "born", "markov", "analytic"] = "exact"
    seed: int = Field(default=0, ge=0)
    output: str = "results"
    workers: Optional[int] = Field(default=None, ge=1)
    ring_size: Literal["fixed", "auto"] = "fixed"
    exact: ExactOptions = Field(default_factory=ExactOptions)
    langevin: LangevinOptions = Field(default_factory=LangevinOptions)
    born: BornOptions = Field(default_factory=BornOptions)
    sweep: SweepOptions = Field(default_factory=SweepOptions)
    spectrum: SpectrumOptions = Field(default_factory=SpectrumOptions)
    grid: Dict[str, List[float]] = Field(default_factory=dict)

    @field_validator('grid')
    def validate_grid(cls, v):
        for name, values in v.items():
            if name not in GRID_AXES:
                raise ValueError(f"unknown grid axis '{name}'")
            if not values:
                raise ValueError(f"grid axis '{name}' has no values")
        return v

    def check_compatible(self, system: SystemSpec) -> None:
        """
        Reject interacting chains for the methods that need U = 0

        Raises:
            ValueError: If U != 0 (directly, through g or a grid axis) and method is not langevin
        """
        if self.method == "langevin":
            return
        interacting = system.chain.U != 0 or any(self.sweep.g)
        for axis in ("chain.U", "chain.g"):
            interacting = interacting or any(self.grid.get(axis, []))
        if interacting:
            raise ValueError(f"U != 0 requires method = langevin (got method = {self.method})")


class ConfigDocument(ExperimentPlan):
    """Every key of a configuration file, system and plan together"""
    chain: ChainConfig
    left: ReservoirConfig
    right: ReservoirConfig
    epsilon: float = Field(ge=0)

    def system_spec(self) -> SystemSpec:
        left = self.left.to_spec("left")
        U = self.chain.U or 0.0
        if self.chain.g is not None:
            U = interaction_from_g(self.chain.g, self.left.nbar)
        chain = ChainSpec(L=self.chain.L, J_s=self.chain.Js, delta=self.chain.delta, U=U)
        system = SystemSpec(chain=chain, left=left, right=self.right.to_spec("right"),
                            epsilon=self.epsilon)
        if self.ring_size == "auto":
            system = system.with_ring_sizes_for_gamma()
        return system

    def plan(self) -> ExperimentPlan:
        return ExperimentPlan.model_validate(self.model_dump(include=set(ExperimentPlan.model_fields)))


SYSTEM_KEYS = (
    "chain.L", "chain.Js", "chain.delta", "chain.U",
    "left.M", "left.Jr", "left.gamma", "left.beta", "left.nbar",
    "right.M", "right.Jr", "right.gamma", "right.beta", "right.nbar",
    "epsilon",
)
GRID_AXES = frozenset(SYSTEM_KEYS) | frozenset(GRID_ALIASES) | {"chain.g"}


# SQLAlchemy models for database
class GridPoint(Base):
    __tablename__ = "grid_points"

    param_hash = Column(String(64), primary_key=True)
    grid_id = Column(String(64), nullable=False, index=True)
    position = Column(Integer, nullable=False)
    method = Column(String(16), nullable=False)
    params = Column(JSON, nullable=False)
    current = Column(Float, nullable=True)
    stderr = Column(Float, nullable=True)
    wall_time = Column(Float, nullable=True)
    status = Column(String(16), nullable=False, default="ok")
    error = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False)

    def __repr__(self):
        return f"<GridPoint(position={self.position}, method={self.method}, status={self.status})>"
