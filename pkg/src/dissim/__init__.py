"""Storage-function certificates, compositional abstractions and moment
error bounds for networks of jump-diffusion systems."""

__version__ = "0.1.0"

from .exceptions import (ConfigError, DimensionError, DissimError,
                         DivergenceError, DomainError, InfeasibleError,
                         NumericError, RankError)
from .hybrid_model import (AuxiliarySystem, InputSignal, JumpDiffusionSystem,
                           Nonlinearity, simulate, simulate_batch)
from .storage import (StorageCertificate, check_assumption1,
                      check_structural_equations, dissipation_check,
                      gain_summary, generator_value, interface_input)
from .abstraction import AbstractionBuilder, build_abstraction
from .network import (ErrorBound, Interconnection, check_interconnection_lmi,
                      check_matching_condition, compose, composite_gains,
                      error_bound, monte_carlo_error)
from .config import load_config

__all__ = ["__version__", "ConfigError", "DimensionError", "DissimError",
           "DivergenceError", "DomainError", "InfeasibleError",
           "NumericError", "RankError", "AuxiliarySystem", "InputSignal",
           "JumpDiffusionSystem", "Nonlinearity", "simulate",
           "simulate_batch", "StorageCertificate", "check_assumption1",
           "check_structural_equations", "dissipation_check",
           "gain_summary", "generator_value", "interface_input",
           "AbstractionBuilder", "build_abstraction", "ErrorBound",
           "Interconnection", "check_interconnection_lmi",
           "check_matching_condition", "compose", "composite_gains",
           "error_bound", "monte_carlo_error", "load_config"]
