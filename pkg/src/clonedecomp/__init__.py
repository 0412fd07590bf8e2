"""Feature-allocation MAP search for variant allele fraction data."""
from .bregman import objective_q
from .calibrate import CalibrationTrace, calibrate_lambda
from .core import (DimensionError, DomainError, GenotypeMatrix, Mode, ModelConfig,
                   ReadCountMatrix, Solution, WeightMatrix, expected_vaf)
from .simulate import match_columns, simulate_haplotype, simulate_subclone
from .solver import (BirthSchedule, RestartEnsemble, SolverConfig, fl_means_solve,
                     local_optimality_scan, multi_restart)
from .uncertainty import McmcConfig, UncertaintyMatrix, conditional_mcmc

__all__ = [
    "BirthSchedule", "CalibrationTrace", "DimensionError", "DomainError", "GenotypeMatrix",
    "McmcConfig", "Mode", "ModelConfig", "ReadCountMatrix", "RestartEnsemble", "Solution",
    "SolverConfig", "UncertaintyMatrix", "WeightMatrix", "calibrate_lambda",
    "conditional_mcmc", "expected_vaf", "fl_means_solve", "local_optimality_scan",
    "match_columns", "multi_restart", "objective_q", "simulate_haplotype",
    "simulate_subclone",
]
