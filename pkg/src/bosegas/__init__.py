"""Grand-canonical interacting Bose gas in its Brownian-bridge path
representation: configuration encodings, Hamiltonians, samplers, and a
numerical verification layer."""

from .errors import (
    BoseGasError,
    BudgetError,
    ConfigurationError,
    NotPermutationWiseError,
    StructuralError,
)
from .hamiltonians import ModelParams, QuadratureSpec
from .interactions import (
    EnergyModel,
    PairPotential,
    SuperstabilityConstants,
    bump_model,
    hard_core_model,
    zero_model,
)
from .representations import FkConfig, MpConfig, RlConfig
from .trajectories import Bridge, Loop, MarkTriple, SausageSpec, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "BoseGasError",
    "Bridge",
    "BudgetError",
    "ConfigurationError",
    "EnergyModel",
    "FkConfig",
    "Loop",
    "MarkTriple",
    "ModelParams",
    "MpConfig",
    "NotPermutationWiseError",
    "PairPotential",
    "QuadratureSpec",
    "RlConfig",
    "SausageSpec",
    "StructuralError",
    "SuperstabilityConstants",
    "TimeGrid",
    "bump_model",
    "hard_core_model",
    "zero_model",
]
