"""Adiabatic evolution of a dot state coupled to a continuum through its threshold."""
from .errors import (ConfigError, DispersiveAssumptionError, DivergenceError, DivesimError,
                     DomainError, FitError, IntegratorError, ModelInvalidError,
                     NoBoundStateError, NormalizationError, ProbeError, UnsupportedRegimeError)
from .formfactor import (ExpFlat, IRCutoff, PowerLaw, SpectralMeasure, Tabulated, discretize,
                         driving_h, kernel_K, moment, mu)
from .spectral import (Model, bound_state, critical_energy, cutoff_bound_state,
                       instantaneous_state, spectral_density, static_survival)
from .dynamics import (PulseSchedule, evolve, microscopic_survival, oracle_evolve,
                       survival_probability, threshold_distance, threshold_run)
from .harness import fit_exponent, load_config, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DispersiveAssumptionError", "DivergenceError", "DivesimError", "DomainError",
    "FitError", "IntegratorError", "ModelInvalidError", "NoBoundStateError", "NormalizationError",
    "ProbeError", "UnsupportedRegimeError",
    "ExpFlat", "IRCutoff", "PowerLaw", "SpectralMeasure", "Tabulated", "discretize", "driving_h",
    "kernel_K", "moment", "mu",
    "Model", "bound_state", "critical_energy", "cutoff_bound_state", "instantaneous_state",
    "spectral_density", "static_survival",
    "PulseSchedule", "evolve", "microscopic_survival", "oracle_evolve", "survival_probability",
    "threshold_distance", "threshold_run",
    "fit_exponent", "load_config", "run_scenario",
]
